// Biaffine dependency parser backbone: sentence scoring, sign-threshold
// graph decoding, per-dependent argmax tree decoding, joint edge+label loss,
// mini-batch training, and UAS/LAS evaluation.

#ifndef XLING_PARSER_HPP
#define XLING_PARSER_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xling/autodiff.hpp"
#include "xling/layers.hpp"
#include "xling/optim.hpp"
#include "xling/rng.hpp"
#include "xling/serialize.hpp"
#include "xling/treebank.hpp"

namespace xling {

struct ParserDims {
    std::size_t word_dim = 100;
    std::size_t pos_dim = 50;
    std::size_t lstm_layers = 2;
    std::size_t hidden = 100;
    std::size_t mlp_dim = 100;
};

inline void to_json(nlohmann::json& j, const ParserDims& d) {
    j = {{"word_dim", d.word_dim},
         {"pos_dim", d.pos_dim},
         {"lstm_layers", d.lstm_layers},
         {"hidden", d.hidden},
         {"mlp_dim", d.mlp_dim}};
}

inline void from_json(const nlohmann::json& j, ParserDims& d) {
    j.at("word_dim").get_to(d.word_dim);
    j.at("pos_dim").get_to(d.pos_dim);
    j.at("lstm_layers").get_to(d.lstm_layers);
    j.at("hidden").get_to(d.hidden);
    j.at("mlp_dim").get_to(d.mlp_dim);
}

inline nlohmann::json vocab_to_json(const Vocab& v) {
    return {{"words", v.word_names()}, {"upos", v.upos_names()}, {"deprel", v.deprel_names()}};
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
    return Vocab::from_names(j.at("words").get<std::vector<std::string>>(),
                             j.at("upos").get<std::vector<std::string>>(),
                             j.at("deprel").get<std::vector<std::string>>());
}

// Scores and decoded attachments for one sentence of length L.
struct ParseOutput {
    // edge.at(i, j-1): score that position i (0 = virtual root) heads token j
    ad::Tensor edge;  // (L+1) x L
    // label.at(j-1, i, c): class-c score for head candidate i of token j
    ad::Tensor label;  // L x (L+1) x k
    std::vector<std::size_t> heads;   // decoded head per token, in [0, L]
    std::vector<std::size_t> labels;  // decoded label index per token
};

// Edges whose score clears zero (the threshold includes zero itself). Returned
// as (head, dependent) pairs in row-major order.
inline std::vector<std::pair<std::size_t, std::size_t>> decode_graph(const ad::Tensor& edge) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < edge.rows(); ++i)
        for (std::size_t j = 0; j < edge.cols(); ++j)
            if (edge.at(i, j) >= 0.0) out.emplace_back(i, j + 1);
    return out;
}

// One head per token by column argmax (ties -> smallest head index), then the
// best label at the chosen pair. The result may fail to be a tree; callers
// record it as-is.
inline void decode_tree(const ad::Tensor& edge, const ad::Tensor& label,
                        std::vector<std::size_t>& heads, std::vector<std::size_t>& labels) {
    const std::size_t L = edge.cols(), k = label.shape[2];
    heads.assign(L, 0);
    labels.assign(L, 0);
    for (std::size_t j = 0; j < L; ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < edge.rows(); ++i)
            if (edge.at(i, j) > edge.at(best, j)) best = i;
        heads[j] = best;
        std::size_t bc = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (label.at(j, best, c) > label.at(j, best, bc)) bc = c;
        labels[j] = bc;
    }
}

struct EvalResult {
    double uas = 0.0;
    double las = 0.0;
    std::size_t n_tokens = 0;
};

// Training hyperparameters shared by the backbone and the student.
struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr = 3e-5;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double weight_decay = 1e-5;
    double lambda1 = 1.0;
    std::function<void(std::size_t epoch, double loss)> on_epoch;
};

// Shared mini-batch engine: shuffled epochs, per-sentence backward with
// summed gradients, one Adam update per batch scaled by 1/batch. Returns the
// mean per-sentence loss of every epoch. Deterministic given the seed.
template <class LossFn>
std::vector<double> run_training(const Treebank& tb, const std::vector<ad::Parameter*>& params,
                                 LossFn&& sentence_loss, const TrainOptions& opts,
                                 std::uint64_t seed) {
    if (tb.sentences.empty()) throw std::invalid_argument("training: empty treebank");
    ad::AdamConfig acfg;
    acfg.lr = opts.lr;
    acfg.beta1 = opts.beta1;
    acfg.beta2 = opts.beta2;
    acfg.weight_decay = opts.weight_decay;
    ad::Adam opt(params, acfg);

    Rng data_rng(derive_seed(seed, "data"));
    std::vector<std::size_t> order(tb.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> curve;
    curve.reserve(opts.epochs);
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        data_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opts.batch_size);
            opt.zero_grad();
            for (std::size_t k = start; k < stop; ++k) {
                ad::Tape tape;
                ad::Value loss = sentence_loss(tape, tb.sentences[order[k]]);
                tape.backward(loss);
                epoch_loss += tape.value(loss).data[0];
            }
            opt.step(1.0 / static_cast<double>(stop - start));
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch));
        curve.push_back(epoch_loss);
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
    }
    return curve;
}

class ParserModel {
public:
    ParserModel(Vocab vocab, ParserDims dims, std::uint64_t seed)
        : vocab_(std::move(vocab)),
          dims_(dims),
          rng_(derive_seed(seed, "init.parser")),
          emb_(vocab_.word_count(), dims.word_dim, vocab_.upos_count(), dims.pos_dim, rng_),
          lstm_(dims.lstm_layers, dims.word_dim + dims.pos_dim, dims.hidden, rng_),
          edge_head_(2 * dims.hidden, dims.mlp_dim, rng_),
          edge_dep_(2 * dims.hidden, dims.mlp_dim, rng_),
          label_head_(2 * dims.hidden, dims.mlp_dim, rng_),
          label_dep_(2 * dims.hidden, dims.mlp_dim, rng_),
          edge_(dims.mlp_dim, dims.mlp_dim, rng_),
          label_(dims.mlp_dim, dims.mlp_dim, vocab_.deprel_count(), rng_) {}

    const Vocab& vocab() const { return vocab_; }
    const ParserDims& dims() const { return dims_; }

    // BiLSTM states for positions 0..L; row 0 is the virtual root, which gets
    // its own reserved embedding row and participates as a head candidate.
    ad::Value encode(ad::Tape& t, const Sentence& s) {
        if (s.size() == 0) throw std::invalid_argument("encode: empty sentence");
        std::vector<std::size_t> words{Vocab::kRoot}, pos{Vocab::kRoot};
        words.reserve(s.size() + 1);
        pos.reserve(s.size() + 1);
        for (const Token& tok : s.tokens) {
            words.push_back(vocab_.word(tok.form));
            pos.push_back(vocab_.upos(tok.upos));
        }
        return lstm_.forward(t, emb_.forward(t, words, pos));
    }

    // Joint loss on one sentence: mean binary cross-entropy over every
    // (head candidate, dependent) pair on edge existence, plus lambda1 times
    // the mean label cross-entropy over the gold edges.
    ad::Value loss(ad::Tape& t, const Sentence& s, double lambda1) {
        return loss_given(t, encode(t, s), s, lambda1);
    }

    // same loss on top of an already-computed encoding, so callers can hang
    // extra heads off the shared states
    ad::Value loss_given(ad::Tape& t, ad::Value enc, const Sentence& s, double lambda1) {
        const std::size_t L = s.size();
        ad::Value deps = ad::slice_rows(enc, 1, L + 1);
        ad::Value elog =
            edge_.score(t, edge_dep_.forward(t, deps), edge_head_.forward(t, enc));  // L x (L+1)

        ad::Tensor target({L, L + 1});
        for (std::size_t j = 1; j <= L; ++j) target.at(j - 1, s.tokens[j - 1].head) = 1.0;
        ad::Value edge_loss = ad::bce_with_logits(elog, target);

        std::vector<std::pair<std::size_t, std::size_t>> gold_pairs;
        std::vector<std::size_t> gold_labels;
        gold_pairs.reserve(L);
        gold_labels.reserve(L);
        for (std::size_t j = 1; j <= L; ++j) {
            gold_pairs.emplace_back(j - 1, s.tokens[j - 1].head);
            gold_labels.push_back(vocab_.deprel(s.tokens[j - 1].deprel));
        }
        ad::Value label_loss = ad::cross_entropy(
            label_.score_pairs(t, label_dep_.forward(t, deps), label_head_.forward(t, enc),
                               gold_pairs),
            gold_labels);
        return ad::add(edge_loss, ad::scale(label_loss, lambda1));
    }

    // Full score matrices plus decoded heads/labels (no gradients involved).
    ParseOutput score_sentence(const Sentence& s) {
        const std::size_t L = s.size();
        ad::Tape t;
        ad::Value enc = encode(t, s);
        ad::Value deps = ad::slice_rows(enc, 1, L + 1);
        const ad::Tensor ehead = t.value(edge_head_.forward(t, enc));
        const ad::Tensor edep = t.value(edge_dep_.forward(t, deps));
        const ad::Tensor lhead = t.value(label_head_.forward(t, enc));
        const ad::Tensor ldep = t.value(label_dep_.forward(t, deps));

        ParseOutput out;
        const ad::Tensor dep_major = edge_.score_values(edep, ehead);  // L x (L+1)
        out.edge = ad::Tensor({L + 1, L});
        for (std::size_t j = 0; j < L; ++j)
            for (std::size_t i = 0; i <= L; ++i) out.edge.at(i, j) = dep_major.at(j, i);
        out.label = label_.score_values(ldep, lhead);  // L x (L+1) x k
        decode_tree(out.edge, out.label, out.heads, out.labels);
        return out;
    }

    ParamList params() {
        ParamList out;
        emb_.params(out, "emb");
        lstm_.params(out, "lstm");
        edge_head_.params(out, "mlp.edge_head");
        edge_dep_.params(out, "mlp.edge_dep");
        label_head_.params(out, "mlp.label_head");
        label_dep_.params(out, "mlp.label_dep");
        edge_.params(out, "edge");
        label_.params(out, "label");
        return out;
    }

    std::vector<ad::Parameter*> param_ptrs() {
        std::vector<ad::Parameter*> raw;
        for (auto& [name, p] : params()) raw.push_back(p);
        return raw;
    }

    void save(const std::string& path, const nlohmann::json& extra_meta = {}) {
        nlohmann::json meta = extra_meta;
        meta["kind"] = "parser";
        meta["dims"] = dims_;
        meta["vocab"] = vocab_to_json(vocab_);
        save_tensors(path, params_to_file(params(), meta.dump()));
    }

    static ParserModel load(const std::string& path) {
        TensorFile tf = load_tensors(path);
        nlohmann::json meta = nlohmann::json::parse(tf.meta);
        if (meta.value("kind", "") != "parser")
            throw std::runtime_error(path + ": not a parser checkpoint");
        ParserModel m(vocab_from_json(meta.at("vocab")), meta.at("dims").get<ParserDims>(), 0);
        params_from_file(m.params(), tf);
        return m;
    }

private:
    Vocab vocab_;
    ParserDims dims_;
    Rng rng_;  // consumed by the layer initializers below, in order

public:
    nn::EmbeddingLayer emb_;
    nn::BiLSTM lstm_;
    nn::MLPHead edge_head_, edge_dep_, label_head_, label_dep_;
    nn::Biaffine edge_;
    nn::BiaffineLabel label_;
};

// Attachment counting rule: a token scores for UAS when its predicted head
// matches gold, and additionally for LAS when the label matches too. Every
// token counts, punctuation included.
inline void tally_attachments(const Sentence& gold, const std::vector<std::size_t>& heads,
                              const std::vector<std::size_t>& labels, const Vocab& v,
                              std::size_t& n_tokens, std::size_t& heads_ok,
                              std::size_t& labeled_ok) {
    for (std::size_t j = 0; j < gold.size(); ++j) {
        ++n_tokens;
        if (heads[j] != gold.tokens[j].head) continue;
        ++heads_ok;
        if (labels[j] == v.deprel(gold.tokens[j].deprel)) ++labeled_ok;
    }
}

inline EvalResult evaluate(ParserModel& m, const Treebank& tb) {
    EvalResult r;
    std::size_t heads_ok = 0, labeled_ok = 0;
    for (const Sentence& s : tb.sentences) {
        ParseOutput out = m.score_sentence(s);
        tally_attachments(s, out.heads, out.labels, m.vocab(), r.n_tokens, heads_ok, labeled_ok);
    }
    if (r.n_tokens > 0) {
        r.uas = static_cast<double>(heads_ok) / static_cast<double>(r.n_tokens);
        r.las = static_cast<double>(labeled_ok) / static_cast<double>(r.n_tokens);
    }
    return r;
}

// Trains a fresh backbone on the treebank. The vocabulary is built from the
// training data itself; the per-epoch mean loss curve is reported through
// opts.on_epoch and returned alongside the model by value.
inline std::pair<ParserModel, std::vector<double>> train_parser(const Treebank& tb,
                                                                const ParserDims& dims,
                                                                const TrainOptions& opts,
                                                                std::uint64_t seed,
                                                                std::size_t min_freq = 1) {
    ParserModel model(build_vocab(tb, min_freq), dims, seed);
    auto params = model.param_ptrs();
    std::vector<double> curve = run_training(
        tb, params,
        [&](ad::Tape& t, const Sentence& s) { return model.loss(t, s, opts.lambda1); }, opts,
        seed);
    return {std::move(model), std::move(curve)};
}

}  // namespace xling

#endif  // XLING_PARSER_HPP
