// Word-order teacher: head-finding with a source parser, order-instance
// extraction, a POS-only attention model over direction labels, and the
// heuristic/random reference predictors.

#ifndef XLING_TEACHER_HPP
#define XLING_TEACHER_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xling/layers.hpp"
#include "xling/order_predictor.hpp"
#include "xling/parser.hpp"
#include "xling/rng.hpp"
#include "xling/treebank.hpp"

namespace xling {

// One direction-classification example: label 0 when the dependent precedes
// its head in the sentence, 1 when it follows.
struct OrderInstance {
    std::size_t sentence = 0;  // index into the originating treebank
    std::size_t dep = 0;       // 1-based positions
    std::size_t head = 0;
    std::string dep_upos, head_upos;
    int label = 0;
};

inline std::vector<OrderInstance> extract_instances(const Sentence& s, std::size_t sent_index = 0) {
    std::vector<OrderInstance> out;
    out.reserve(s.size());
    for (const Token& t : s.tokens) {
        if (t.head > s.size())
            throw std::invalid_argument("extract_instances: head index out of range");
        if (t.head == 0) continue;    // the virtual root has no POS to pair with
        if (t.head == t.id) continue; // self-attachments (possible in predicted
                                      // head maps) carry no direction
        OrderInstance oi;
        oi.sentence = sent_index;
        oi.dep = t.id;
        oi.head = t.head;
        oi.dep_upos = t.upos;
        oi.head_upos = s.tokens[t.head - 1].upos;
        oi.label = t.id > t.head ? 1 : 0;
        out.push_back(std::move(oi));
    }
    return out;
}

inline std::vector<OrderInstance> extract_instances(const Treebank& tb) {
    std::vector<OrderInstance> out;
    for (std::size_t i = 0; i < tb.size(); ++i) {
        auto part = extract_instances(tb.sentences[i], i);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

// Re-heads every sentence with the parser's decoded attachments; all other
// token fields (including gold labels) are left alone. The agreement rate
// against the incoming heads is reported for diagnostics.
struct FindHeadsResult {
    Treebank treebank;
    double head_agreement = 0.0;
};

inline FindHeadsResult find_heads(ParserModel& parser, const Treebank& tb) {
    FindHeadsResult r;
    r.treebank = tb;
    std::size_t agree = 0, total = 0;
    for (Sentence& s : r.treebank.sentences) {
        ParseOutput out = parser.score_sentence(s);
        for (std::size_t j = 0; j < s.size(); ++j) {
            ++total;
            agree += out.heads[j] == s.tokens[j].head;
            s.tokens[j].head = out.heads[j];
        }
    }
    r.head_agreement = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
    return r;
}

struct TeacherDims {
    std::size_t pos_dim = 50;
    std::size_t att_layers = 1;
    std::size_t att_heads = 4;
    std::size_t head_dim = 16;  // per-head projection width
    std::size_t ff_dim = 100;
    std::size_t mlp_dim = 100;
};

inline void to_json(nlohmann::json& j, const TeacherDims& d) {
    j = {{"pos_dim", d.pos_dim},   {"att_layers", d.att_layers}, {"att_heads", d.att_heads},
         {"head_dim", d.head_dim}, {"ff_dim", d.ff_dim},         {"mlp_dim", d.mlp_dim}};
}

inline void from_json(const nlohmann::json& j, TeacherDims& d) {
    j.at("pos_dim").get_to(d.pos_dim);
    j.at("att_layers").get_to(d.att_layers);
    j.at("att_heads").get_to(d.att_heads);
    j.at("head_dim").get_to(d.head_dim);
    j.at("ff_dim").get_to(d.ff_dim);
    j.at("mlp_dim").get_to(d.mlp_dim);
}

// POS-only direction model: tag embeddings, a stack of position-free
// attention blocks, two reducing MLPs, and a scalar bilinear scorer whose
// sigmoid is the probability of "dependent right of head". Word forms never
// enter.
class TeacherModel : public OrderPredictor {
public:
    TeacherModel(Vocab vocab, TeacherDims dims, std::uint64_t seed)
        : vocab_(std::move(vocab)),
          dims_(dims),
          rng_(derive_seed(seed, "init.teacher")),
          pos_table_(ad::init_params({vocab_.upos_count(), dims.pos_dim}, ad::Init::xavier(),
                                     rng_)),
          order_head_(dims.pos_dim, dims.mlp_dim, rng_),
          order_dep_(dims.pos_dim, dims.mlp_dim, rng_),
          order_(dims.mlp_dim, dims.mlp_dim, rng_) {
        for (std::size_t l = 0; l < dims.att_layers; ++l)
            encoder_.emplace_back(dims.pos_dim, dims.att_heads, dims.head_dim, dims.ff_dim, rng_);
    }

    const Vocab& vocab() const { return vocab_; }
    const TeacherDims& dims() const { return dims_; }

    // logit per edge; edges use 1-based positions into the tag sequence
    ad::Value order_logits(ad::Tape& t, const std::vector<std::size_t>& pos_idx,
                           const std::vector<OrderEdge>& edges) {
        if (pos_idx.empty()) throw std::invalid_argument("order_logits: empty tag sequence");
        std::vector<std::size_t> deps, heads;
        deps.reserve(edges.size());
        heads.reserve(edges.size());
        for (const OrderEdge& e : edges) {
            if (e.dep == 0 || e.dep > pos_idx.size() || e.head == 0 || e.head > pos_idx.size())
                throw std::invalid_argument("order_logits: edge position out of range");
            deps.push_back(e.dep - 1);
            heads.push_back(e.head - 1);
        }
        ad::Value z = ad::gather_rows(t.param(pos_table_), pos_idx);
        for (auto& layer : encoder_) z = layer.forward(t, z);
        ad::Value hd = ad::gather_rows(order_dep_.forward(t, z), deps);
        ad::Value hh = ad::gather_rows(order_head_.forward(t, z), heads);
        ad::Value s = ad::row_sum(ad::mul(ad::matmul(hd, t.param(order_.U)), hh));
        return ad::add_scalar(s, t.param(order_.b));
    }

    ad::Value loss(ad::Tape& t, const Sentence& s) {
        std::vector<OrderEdge> edges;
        ad::Tensor target = sentence_targets(s, edges);
        if (edges.empty()) throw std::invalid_argument("teacher loss: sentence has no instances");
        return ad::bce_with_logits(order_logits(t, tag_indices(s), edges), target);
    }

    std::vector<double> predict(const Sentence& s,
                                const std::vector<OrderEdge>& edges) const override {
        auto* self = const_cast<TeacherModel*>(this);  // forward pass only
        ad::Tape t;
        ad::Value logits = self->order_logits(t, tag_indices(s), edges);
        std::vector<double> out(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const double x = t.value(logits).at(k);
            out[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        }
        return out;
    }

    std::vector<std::size_t> tag_indices(const Sentence& s) const {
        std::vector<std::size_t> idx;
        idx.reserve(s.size());
        for (const Token& tok : s.tokens) idx.push_back(vocab_.upos(tok.upos));
        return idx;
    }

    static ad::Tensor sentence_targets(const Sentence& s, std::vector<OrderEdge>& edges) {
        edges.clear();
        std::vector<double> y;
        for (const OrderInstance& oi : extract_instances(s)) {
            edges.push_back({oi.dep, oi.head});
            y.push_back(static_cast<double>(oi.label));
        }
        return ad::Tensor({y.size()}, y);
    }

    ParamList params() {
        ParamList out;
        out.emplace_back("pos", &pos_table_);
        for (std::size_t l = 0; l < encoder_.size(); ++l)
            encoder_[l].params(out, "att.l" + std::to_string(l));
        order_head_.params(out, "mlp.order_head");
        order_dep_.params(out, "mlp.order_dep");
        order_.params(out, "order");
        return out;
    }

    std::vector<ad::Parameter*> param_ptrs() {
        std::vector<ad::Parameter*> raw;
        for (auto& [name, p] : params()) raw.push_back(p);
        return raw;
    }

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) {
        nlohmann::json meta = extra_meta;
        meta["kind"] = "teacher";
        meta["dims"] = dims_;
        meta["vocab"] = vocab_to_json(vocab_);
        save_tensors(path, params_to_file(params(), meta.dump()));
    }

    static TeacherModel load(const std::string& path) {
        TensorFile tf = load_tensors(path);
        nlohmann::json meta = nlohmann::json::parse(tf.meta);
        if (meta.value("kind", "") != "teacher")
            throw std::runtime_error(path + ": not a teacher checkpoint");
        TeacherModel m(vocab_from_json(meta.at("vocab")), meta.at("dims").get<TeacherDims>(), 0);
        params_from_file(m.params(), tf);
        return m;
    }

private:
    Vocab vocab_;
    TeacherDims dims_;
    Rng rng_;  // consumed by the layer initializers, in order

public:
    ad::Parameter pos_table_;
    std::vector<nn::SelfAttentionLayer> encoder_;
    nn::MLPHead order_head_, order_dep_;
    nn::Biaffine order_;
};

// Thresholded direction accuracy of any predictor against the labels implied
// by the treebank's current heads (predicted score >= 0.5 reads as "right").
inline double order_accuracy(const OrderPredictor& p, const Treebank& tb) {
    std::size_t ok = 0, total = 0;
    for (const Sentence& s : tb.sentences) {
        std::vector<OrderEdge> edges;
        std::vector<int> labels;
        for (const OrderInstance& oi : extract_instances(s)) {
            edges.push_back({oi.dep, oi.head});
            labels.push_back(oi.label);
        }
        if (edges.empty()) continue;
        const std::vector<double> probs = p.predict(s, edges);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            ++total;
            ok += (probs[k] >= 0.5 ? 1 : 0) == labels[k];
        }
    }
    return total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
}

struct TeacherTrainOutcome {
    TeacherModel model;
    std::vector<double> curve;
    double holdout_accuracy = 0.0;
    std::size_t holdout_edges = 0;
};

// Trains the POS-only model with per-sentence BCE using the shared engine.
// A deterministic sentence-level split is held out and its thresholded
// accuracy reported; with too few sentences to split, accuracy falls back to
// the training set.
inline TeacherTrainOutcome train_teacher(const Treebank& tb, const TeacherDims& dims,
                                         const TrainOptions& opts, std::uint64_t seed,
                                         double holdout_frac = 0.1) {
    Treebank usable;
    usable.language = tb.language;
    for (const Sentence& s : tb.sentences)
        if (!extract_instances(s).empty()) usable.sentences.push_back(s);
    if (usable.sentences.empty())
        throw std::invalid_argument("train_teacher: no order instances in treebank");

    Rng split_rng(derive_seed(seed, "holdout"));
    std::vector<std::size_t> order(usable.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    split_rng.shuffle(order);
    std::size_t n_hold = static_cast<std::size_t>(holdout_frac * static_cast<double>(usable.size()));
    if (n_hold + 1 > usable.size()) n_hold = usable.size() - 1;
    Treebank train, hold;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_hold ? hold : train).sentences.push_back(usable.sentences[order[k]]);

    TeacherModel model(build_vocab(usable), dims, seed);
    auto params = model.param_ptrs();
    std::vector<double> curve = run_training(
        train, params, [&](ad::Tape& t, const Sentence& s) { return model.loss(t, s); }, opts,
        seed);

    const Treebank& eval_tb = hold.sentences.empty() ? train : hold;
    TeacherTrainOutcome out{std::move(model), std::move(curve), 0.0, 0};
    out.holdout_accuracy = order_accuracy(out.model, eval_tb);
    for (const Sentence& s : eval_tb.sentences) out.holdout_edges += extract_instances(s).size();
    return out;
}

// Table-lookup predictor: P(right) = 1 - target left-frequency of the edge's
// (dep upos, head upos, gold label) triple; unseen triples fall back to 0.5.
class HeurTeacher : public OrderPredictor {
public:
    explicit HeurTeacher(std::map<TripleKey, double> left_freq)
        : left_freq_(std::move(left_freq)) {}

    std::vector<double> predict(const Sentence& s,
                                const std::vector<OrderEdge>& edges) const override {
        std::vector<double> out;
        out.reserve(edges.size());
        for (const OrderEdge& e : edges) {
            const Token& dep = s.tokens[e.dep - 1];
            const Token& head = s.tokens[e.head - 1];
            auto it = left_freq_.find(TripleKey{dep.upos, head.upos, dep.deprel});
            out.push_back(it == left_freq_.end() ? 0.5 : 1.0 - it->second);
        }
        return out;
    }

    const std::map<TripleKey, double>& table() const { return left_freq_; }

private:
    std::map<TripleKey, double> left_freq_;
};

// Seeded noise predictor: the probability for an edge is a pure hash of the
// seed and the edge's content, so repeated queries reproduce the same values.
class RandTeacher : public OrderPredictor {
public:
    explicit RandTeacher(std::uint64_t seed) : seed_(seed) {}

    std::vector<double> predict(const Sentence& s,
                                const std::vector<OrderEdge>& edges) const override {
        std::vector<double> out;
        out.reserve(edges.size());
        for (const OrderEdge& e : edges) {
            std::uint64_t h = derive_seed(seed_, s.tokens[e.dep - 1].upos);
            h = derive_seed(h, s.tokens[e.head - 1].upos);
            h = splitmix64(h ^ (e.dep * 0x100000001b3ULL) ^ (e.head * 0x9e3779b97f4a7c15ULL));
            out.push_back(static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0));
        }
        return out;
    }

private:
    std::uint64_t seed_;
};

}  // namespace xling

#endif  // XLING_TEACHER_HPP
