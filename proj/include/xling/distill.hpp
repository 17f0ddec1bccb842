// Student parser with a word-order branch: the backbone's shared encoder
// additionally feeds two reducing MLPs and a scalar bilinear scorer that
// predict, for each gold edge, whether the dependent lands right of its
// head. The order targets come from a teacher's soft scores, from the
// teacher's thresholded decisions, or from the training text's own order.

#ifndef XLING_DISTILL_HPP
#define XLING_DISTILL_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "xling/layers.hpp"
#include "xling/order_predictor.hpp"
#include "xling/parser.hpp"
#include "xling/teacher.hpp"
#include "xling/treebank.hpp"

namespace xling {

// order-target regimes for the student's extra branch
enum class DistillMode {
    kd,      // regress the sigmoid score onto the teacher's probability
    pseudo,  // binary loss against the teacher's thresholded decision
    wol      // binary loss against the training text's own order labels
};

inline std::string to_string(DistillMode m) {
    switch (m) {
        case DistillMode::kd: return "kd";
        case DistillMode::pseudo: return "pseudo";
        case DistillMode::wol: return "wol";
    }
    throw std::invalid_argument("unknown distill mode");
}

inline DistillMode distill_mode_from(const std::string& name) {
    if (name == "kd") return DistillMode::kd;
    if (name == "pseudo") return DistillMode::pseudo;
    if (name == "wol") return DistillMode::wol;
    throw std::invalid_argument("unknown distill mode: " + name +
                                " (expected kd, pseudo, or wol)");
}

struct StudentDims {
    ParserDims parser;
    std::size_t order_mlp_dim = 100;
};

inline void to_json(nlohmann::json& j, const StudentDims& d) {
    j = {{"parser", d.parser}, {"order_mlp_dim", d.order_mlp_dim}};
}

inline void from_json(const nlohmann::json& j, StudentDims& d) {
    j.at("parser").get_to(d.parser);
    j.at("order_mlp_dim").get_to(d.order_mlp_dim);
}

class StudentModel : public OrderPredictor {
public:
    StudentModel(Vocab vocab, StudentDims dims, std::uint64_t seed)
        : dims_(dims),
          parser_(std::move(vocab), dims.parser, seed),
          orng_(derive_seed(seed, "init.order")),  // separate stream: the
          // backbone's draws stay identical to a standalone parser's
          order_head_(2 * dims.parser.hidden, dims.order_mlp_dim, orng_),
          order_dep_(2 * dims.parser.hidden, dims.order_mlp_dim, orng_),
          order_(dims.order_mlp_dim, dims.order_mlp_dim, orng_) {}

    const Vocab& vocab() const { return parser_.vocab(); }
    const StudentDims& dims() const { return dims_; }
    ParserModel& parser() { return parser_; }
    const ParserModel& parser() const { return parser_; }

    // order logit per edge from already-computed encoder states (row 0 is
    // the virtual root, so token i sits in row i)
    ad::Value order_logits_given(ad::Tape& t, ad::Value enc,
                                 const std::vector<OrderEdge>& edges) {
        const std::size_t L = t.value(enc).rows() - 1;
        std::vector<std::size_t> deps, heads;
        deps.reserve(edges.size());
        heads.reserve(edges.size());
        for (const OrderEdge& e : edges) {
            if (e.dep == 0 || e.dep > L || e.head == 0 || e.head > L)
                throw std::invalid_argument("order logits: edge position out of range");
            deps.push_back(e.dep);
            heads.push_back(e.head);
        }
        ad::Value hd = ad::gather_rows(order_dep_.forward(t, enc), deps);
        ad::Value hh = ad::gather_rows(order_head_.forward(t, enc), heads);
        ad::Value s = ad::row_sum(ad::mul(ad::matmul(hd, t.param(order_.U)), hh));
        return ad::add_scalar(s, t.param(order_.b));
    }

    ad::Value order_logits(ad::Tape& t, const Sentence& s, const std::vector<OrderEdge>& edges) {
        return order_logits_given(t, parser_.encode(t, s), edges);
    }

    std::vector<double> predict(const Sentence& s,
                                const std::vector<OrderEdge>& edges) const override {
        auto* self = const_cast<StudentModel*>(this);  // forward pass only
        ad::Tape t;
        ad::Value logits = self->order_logits(t, s, edges);
        std::vector<double> out(edges.size());
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const double x = t.value(logits).at(k);
            out[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        }
        return out;
    }

    // Backbone loss plus lambda2 times the order term. lambda2 = 0 skips the
    // order branch altogether, reproducing the standalone parser bit for bit.
    // kd and pseudo read the teacher's probabilities for the sentence's gold
    // edges; wol needs no teacher.
    ad::Value loss(ad::Tape& t, const Sentence& s, double lambda1, double lambda2,
                   DistillMode mode, const OrderPredictor* teacher) {
        if (lambda2 == 0.0) return parser_.loss(t, s, lambda1);
        if (mode != DistillMode::wol && teacher == nullptr)
            throw std::invalid_argument("distillation needs a teacher for mode " +
                                        to_string(mode));

        ad::Value enc = parser_.encode(t, s);
        ad::Value base = parser_.loss_given(t, enc, s, lambda1);

        std::vector<OrderEdge> edges;
        std::vector<double> gold;
        for (const OrderInstance& oi : extract_instances(s)) {
            edges.push_back({oi.dep, oi.head});
            gold.push_back(static_cast<double>(oi.label));
        }
        if (edges.empty()) return base;  // nothing but the root: no order signal

        ad::Value logits = order_logits_given(t, enc, edges);
        ad::Value order_term = [&] {
            switch (mode) {
                case DistillMode::wol:
                    return ad::bce_with_logits(logits, ad::Tensor({gold.size()}, gold));
                case DistillMode::pseudo: {
                    std::vector<double> hard = teacher->predict(s, edges);
                    for (double& p : hard) p = p >= 0.5 ? 1.0 : 0.0;
                    return ad::bce_with_logits(logits, ad::Tensor({hard.size()}, hard));
                }
                case DistillMode::kd: {
                    std::vector<double> soft = teacher->predict(s, edges);
                    return ad::mse(ad::sigmoid(logits), ad::Tensor({soft.size()}, soft));
                }
            }
            throw std::invalid_argument("unknown distill mode");
        }();
        return ad::add(base, ad::scale(order_term, lambda2));
    }

    ParamList params() {
        ParamList out = parser_.params();
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
        meta["kind"] = "student";
        meta["dims"] = dims_;
        meta["vocab"] = vocab_to_json(parser_.vocab());
        save_tensors(path, params_to_file(params(), meta.dump()));
    }

    static StudentModel load(const std::string& path) {
        TensorFile tf = load_tensors(path);
        nlohmann::json meta = nlohmann::json::parse(tf.meta);
        if (meta.value("kind", "") != "student")
            throw std::runtime_error(path + ": not a student checkpoint");
        StudentModel m(vocab_from_json(meta.at("vocab")), meta.at("dims").get<StudentDims>(), 0);
        params_from_file(m.params(), tf);
        return m;
    }

private:
    StudentDims dims_;

public:
    ParserModel parser_;

private:
    Rng orng_;

public:
    nn::MLPHead order_head_, order_dep_;
    nn::Biaffine order_;
};

// Trains a fresh student on the treebank with the given order-target regime.
// The data order, batching, and update rule are shared with the backbone
// trainer, so a lambda2 of zero reproduces its loss curve exactly.
inline std::pair<StudentModel, std::vector<double>> train_student(
    const Treebank& tb, const StudentDims& dims, const TrainOptions& opts, double lambda2,
    DistillMode mode, const OrderPredictor* teacher, std::uint64_t seed,
    std::size_t min_freq = 1) {
    StudentModel model(build_vocab(tb, min_freq), dims, seed);
    auto params = model.param_ptrs();
    std::vector<double> curve = run_training(
        tb, params,
        [&](ad::Tape& t, const Sentence& s) {
            return model.loss(t, s, opts.lambda1, lambda2, mode, teacher);
        },
        opts, seed);
    return {std::move(model), std::move(curve)};
}

}  // namespace xling

#endif  // XLING_DISTILL_HPP
