// Neural building blocks: word+POS embedding, multilayer BiLSTM, reducing
// MLP heads, biaffine scorers, and a self-attention encoder with no notion
// of position.

#ifndef XLING_LAYERS_HPP
#define XLING_LAYERS_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "xling/autodiff.hpp"
#include "xling/rng.hpp"
#include "xling/serialize.hpp"
#include "xling/tensor.hpp"

namespace xling::nn {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Value;

// Concatenated word+POS lookup: row i of the output is word_row(words[i])
// followed by pos_row(pos[i]).
struct EmbeddingLayer {
    Parameter word_table;  // |V_w| x d_w
    Parameter pos_table;   // |V_p| x d_p

    EmbeddingLayer(std::size_t n_words, std::size_t d_w, std::size_t n_pos, std::size_t d_p,
                   Rng& rng)
        : word_table(ad::init_params({n_words, d_w}, ad::Init::xavier(), rng)),
          pos_table(ad::init_params({n_pos, d_p}, ad::Init::xavier(), rng)) {}

    std::size_t out_dim() const { return word_table.value.cols() + pos_table.value.cols(); }

    Value forward(Tape& t, const std::vector<std::size_t>& words,
                  const std::vector<std::size_t>& pos) {
        if (words.size() != pos.size())
            throw std::invalid_argument("embed: word/pos sequences differ in length");
        return ad::concat_cols(ad::gather_rows(t.param(word_table), words),
                               ad::gather_rows(t.param(pos_table), pos));
    }

    void params(ParamList& out, const std::string& prefix) {
        out.emplace_back(prefix + ".word", &word_table);
        out.emplace_back(prefix + ".pos", &pos_table);
    }
};

// One direction of one LSTM layer. Weights follow the standard cell:
//   i = sig(x Wi + h Ui + bi)     f = sig(x Wf + h Uf + bf)
//   o = sig(x Wo + h Uo + bo)     g = tanh(x Wg + h Ug + bg)
//   c = f*c' + i*g                h = o * tanh(c)
struct LstmDirection {
    Parameter Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wg, Ug, bg;

    LstmDirection(std::size_t in, std::size_t hidden, Rng& rng)
        : Wi(ad::init_params({in, hidden}, ad::Init::xavier(), rng)),
          Ui(ad::init_params({hidden, hidden}, ad::Init::xavier(), rng)),
          bi(Tensor({hidden})),
          Wf(ad::init_params({in, hidden}, ad::Init::xavier(), rng)),
          Uf(ad::init_params({hidden, hidden}, ad::Init::xavier(), rng)),
          bf(Tensor({hidden}, 1.0)),  // open forget gate at init
          Wo(ad::init_params({in, hidden}, ad::Init::xavier(), rng)),
          Uo(ad::init_params({hidden, hidden}, ad::Init::xavier(), rng)),
          bo(Tensor({hidden})),
          Wg(ad::init_params({in, hidden}, ad::Init::xavier(), rng)),
          Ug(ad::init_params({hidden, hidden}, ad::Init::xavier(), rng)),
          bg(Tensor({hidden})) {}

    std::size_t hidden() const { return bi.value.numel(); }

    // steps over rows of x (L x in) in the given order; returns h states
    // stacked back in input row order
    Value run(Tape& t, Value x, bool reversed) {
        const std::size_t L = t.value(x).rows();
        const std::size_t H = hidden();
        Value wi = t.param(Wi), ui = t.param(Ui), vbi = t.param(bi);
        Value wf = t.param(Wf), uf = t.param(Uf), vbf = t.param(bf);
        Value wo = t.param(Wo), uo = t.param(Uo), vbo = t.param(bo);
        Value wg = t.param(Wg), ug = t.param(Ug), vbg = t.param(bg);
        Value h = t.leaf(Tensor({1, H}));
        Value c = t.leaf(Tensor({1, H}));
        std::vector<Value> states(L);
        for (std::size_t step = 0; step < L; ++step) {
            const std::size_t row = reversed ? L - 1 - step : step;
            Value xt = ad::slice_rows(x, row, row + 1);
            Value i = ad::sigmoid(ad::add_rowvec(ad::add(ad::matmul(xt, wi), ad::matmul(h, ui)), vbi));
            Value f = ad::sigmoid(ad::add_rowvec(ad::add(ad::matmul(xt, wf), ad::matmul(h, uf)), vbf));
            Value o = ad::sigmoid(ad::add_rowvec(ad::add(ad::matmul(xt, wo), ad::matmul(h, uo)), vbo));
            Value g = ad::tanh(ad::add_rowvec(ad::add(ad::matmul(xt, wg), ad::matmul(h, ug)), vbg));
            c = ad::add(ad::mul(f, c), ad::mul(i, g));
            h = ad::mul(o, ad::tanh(c));
            states[row] = h;
        }
        return ad::stack_rows(states);
    }

    void params(ParamList& out, const std::string& prefix) {
        out.emplace_back(prefix + ".wi", &Wi);
        out.emplace_back(prefix + ".ui", &Ui);
        out.emplace_back(prefix + ".bi", &bi);
        out.emplace_back(prefix + ".wf", &Wf);
        out.emplace_back(prefix + ".uf", &Uf);
        out.emplace_back(prefix + ".bf", &bf);
        out.emplace_back(prefix + ".wo", &Wo);
        out.emplace_back(prefix + ".uo", &Uo);
        out.emplace_back(prefix + ".bo", &bo);
        out.emplace_back(prefix + ".wg", &Wg);
        out.emplace_back(prefix + ".ug", &Ug);
        out.emplace_back(prefix + ".bg", &bg);
    }
};

// Stacked bidirectional LSTM; each layer concatenates a forward and a
// backward pass, so its output width is 2*hidden.
struct BiLSTM {
    std::vector<LstmDirection> fwd, bwd;

    BiLSTM(std::size_t layers, std::size_t in, std::size_t hidden, Rng& rng) {
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t d = l == 0 ? in : 2 * hidden;
            fwd.emplace_back(d, hidden, rng);
            bwd.emplace_back(d, hidden, rng);
        }
    }

    std::size_t out_dim() const { return 2 * fwd.front().hidden(); }

    Value forward(Tape& t, Value x) {
        if (t.value(x).rows() == 0) throw std::invalid_argument("bilstm: empty sequence");
        for (std::size_t l = 0; l < fwd.size(); ++l)
            x = ad::concat_cols(fwd[l].run(t, x, false), bwd[l].run(t, x, true));
        return x;
    }

    void params(ParamList& out, const std::string& prefix) {
        for (std::size_t l = 0; l < fwd.size(); ++l) {
            fwd[l].params(out, prefix + ".l" + std::to_string(l) + ".fwd");
            bwd[l].params(out, prefix + ".l" + std::to_string(l) + ".bwd");
        }
    }
};

// Single affine map + saturating nonlinearity, reducing width.
struct MLPHead {
    Parameter W;  // in x out
    Parameter b;  // out

    MLPHead(std::size_t in, std::size_t out, Rng& rng)
        : W(ad::init_params({in, out}, ad::Init::xavier(), rng)), b(Tensor({out})) {}

    Value forward(Tape& t, Value x) {
        return ad::tanh(ad::add_rowvec(ad::matmul(x, t.param(W)), t.param(b)));
    }

    void params(ParamList& out, const std::string& prefix) {
        out.emplace_back(prefix + ".w", &W);
        out.emplace_back(prefix + ".b", &b);
    }
};

// Scalar bilinear scorer: score(j, i) = hdep_j U hhead_i^T + b. The result
// is dep-major: rows index dependents, columns index head candidates.
struct Biaffine {
    Parameter U;  // d_dep x d_head
    Parameter b;  // 1-element

    Biaffine(std::size_t d_dep, std::size_t d_head, Rng& rng)
        : U(ad::init_params({d_dep, d_head}, ad::Init::xavier(), rng)), b(Tensor({1})) {}

    Value score(Tape& t, Value hdep, Value hhead) {
        check_widths(t.value(hdep), t.value(hhead));
        return ad::add_scalar(ad::matmul(ad::matmul(hdep, t.param(U)), ad::transpose(hhead)),
                              t.param(b));
    }

    // same computation without a tape, for decoding
    Tensor score_values(const Tensor& hdep, const Tensor& hhead) const {
        check_widths(hdep, hhead);
        Tensor tmp({hdep.rows(), U.value.cols()});
        ad::matmul_acc(hdep, U.value, tmp);
        Tensor out({hdep.rows(), hhead.rows()}, b.value.data[0]);
        ad::matmul_nt_acc(tmp, hhead, out);
        return out;
    }

    void params(ParamList& out, const std::string& prefix) {
        out.emplace_back(prefix + ".u", &U);
        out.emplace_back(prefix + ".b", &b);
    }

private:
    void check_widths(const Tensor& hdep, const Tensor& hhead) const {
        if (hdep.cols() != U.value.rows() || hhead.cols() != U.value.cols())
            throw std::invalid_argument("biaffine: width mismatch, U is " +
                                        ad::shape_str(U.value.shape) + " but inputs are " +
                                        ad::shape_str(hdep.shape) + " / " +
                                        ad::shape_str(hhead.shape));
    }
};

// k-class bilinear scorer: score(j, i) is a k-vector, class c computed with
// its own U_c plus a shared bias vector.
struct BiaffineLabel {
    std::vector<Parameter> U;  // k matrices, d_dep x d_head
    Parameter b;               // k

    BiaffineLabel(std::size_t d_dep, std::size_t d_head, std::size_t k, Rng& rng)
        : b(Tensor({k})) {
        U.reserve(k);
        for (std::size_t c = 0; c < k; ++c)
            U.emplace_back(ad::init_params({d_dep, d_head}, ad::Init::xavier(), rng));
    }

    std::size_t classes() const { return U.size(); }

    // logits for chosen (dep index, head index) pairs -> n_pairs x k
    Value score_pairs(Tape& t, Value hdep, Value hhead,
                      const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        std::vector<std::size_t> di, hi;
        di.reserve(pairs.size());
        hi.reserve(pairs.size());
        for (const auto& [d, h] : pairs) {
            di.push_back(d);
            hi.push_back(h);
        }
        Value dep_rows = ad::gather_rows(hdep, di);    // n x d_dep
        Value head_rows = ad::gather_rows(hhead, hi);  // n x d_head
        std::vector<Value> cols;
        cols.reserve(U.size());
        for (Parameter& Uc : U)
            cols.push_back(ad::row_sum(ad::mul(ad::matmul(dep_rows, t.param(Uc)), head_rows)));
        return ad::add_rowvec(ad::stack_cols(cols), t.param(b));
    }

    // full class-score block for every (dep j, head i) pair, tape-free:
    // out.at(j, i, c)
    Tensor score_values(const Tensor& hdep, const Tensor& hhead) const {
        const std::size_t nd = hdep.rows(), nh = hhead.rows(), k = U.size();
        Tensor out({nd, nh, k});
        Tensor tmp({nd, U[0].value.cols()});
        Tensor block({nd, nh});
        for (std::size_t c = 0; c < k; ++c) {
            std::fill(tmp.data.begin(), tmp.data.end(), 0.0);
            std::fill(block.data.begin(), block.data.end(), 0.0);
            ad::matmul_acc(hdep, U[c].value, tmp);
            ad::matmul_nt_acc(tmp, hhead, block);
            for (std::size_t j = 0; j < nd; ++j)
                for (std::size_t i = 0; i < nh; ++i)
                    out.at(j, i, c) = block.at(j, i) + b.value.at(c);
        }
        return out;
    }

    void params(ParamList& out, const std::string& prefix) {
        for (std::size_t c = 0; c < U.size(); ++c)
            out.emplace_back(prefix + ".u" + std::to_string(c), &U[c]);
        out.emplace_back(prefix + ".b", &b);
    }
};

// One post-norm self-attention block. There is no positional signal anywhere,
// so permuting the input rows permutes the output rows identically.
struct SelfAttentionLayer {
    std::size_t d_model, n_heads, head_dim;
    std::vector<Parameter> Wq, Wk, Wv;  // per head, d_model x head_dim
    Parameter Wo, bo;                   // n_heads*head_dim x d_model, d_model
    Parameter W1, b1, W2, b2;           // feed-forward
    Parameter ln1_g, ln1_b, ln2_g, ln2_b;

    SelfAttentionLayer(std::size_t d, std::size_t heads, std::size_t hd, std::size_t ff, Rng& rng)
        : d_model(d),
          n_heads(heads),
          head_dim(hd),
          Wo(ad::init_params({heads * hd, d}, ad::Init::xavier(), rng)),
          bo(Tensor({d})),
          W1(ad::init_params({d, ff}, ad::Init::xavier(), rng)),
          b1(Tensor({ff})),
          W2(ad::init_params({ff, d}, ad::Init::xavier(), rng)),
          b2(Tensor({d})),
          ln1_g(Tensor({d}, 1.0)),
          ln1_b(Tensor({d})),
          ln2_g(Tensor({d}, 1.0)),
          ln2_b(Tensor({d})) {
        for (std::size_t h = 0; h < heads; ++h) {
            Wq.push_back(Parameter(ad::init_params({d, hd}, ad::Init::xavier(), rng)));
            Wk.push_back(Parameter(ad::init_params({d, hd}, ad::Init::xavier(), rng)));
            Wv.push_back(Parameter(ad::init_params({d, hd}, ad::Init::xavier(), rng)));
        }
    }

    Value forward(Tape& t, Value x) {
        if (t.value(x).rows() == 0) throw std::invalid_argument("attention: empty sequence");
        std::vector<Value> heads;
        heads.reserve(n_heads);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
        for (std::size_t h = 0; h < n_heads; ++h) {
            Value q = ad::matmul(x, t.param(Wq[h]));
            Value k = ad::matmul(x, t.param(Wk[h]));
            Value v = ad::matmul(x, t.param(Wv[h]));
            Value att = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
            heads.push_back(ad::matmul(att, v));
        }
        Value mixed = ad::add_rowvec(ad::matmul(ad::concat_cols(heads), t.param(Wo)), t.param(bo));
        Value x1 = ad::layer_norm_rows(ad::add(x, mixed), t.param(ln1_g), t.param(ln1_b));
        Value ff = ad::add_rowvec(
            ad::matmul(ad::tanh(ad::add_rowvec(ad::matmul(x1, t.param(W1)), t.param(b1))),
                       t.param(W2)),
            t.param(b2));
        return ad::layer_norm_rows(ad::add(x1, ff), t.param(ln2_g), t.param(ln2_b));
    }

    void params(ParamList& out, const std::string& prefix) {
        for (std::size_t h = 0; h < n_heads; ++h) {
            const std::string hp = prefix + ".h" + std::to_string(h);
            out.emplace_back(hp + ".wq", &Wq[h]);
            out.emplace_back(hp + ".wk", &Wk[h]);
            out.emplace_back(hp + ".wv", &Wv[h]);
        }
        out.emplace_back(prefix + ".wo", &Wo);
        out.emplace_back(prefix + ".bo", &bo);
        out.emplace_back(prefix + ".ff.w1", &W1);
        out.emplace_back(prefix + ".ff.b1", &b1);
        out.emplace_back(prefix + ".ff.w2", &W2);
        out.emplace_back(prefix + ".ff.b2", &b2);
        out.emplace_back(prefix + ".ln1.g", &ln1_g);
        out.emplace_back(prefix + ".ln1.b", &ln1_b);
        out.emplace_back(prefix + ".ln2.g", &ln2_g);
        out.emplace_back(prefix + ".ln2.b", &ln2_b);
    }
};

}  // namespace xling::nn

#endif  // XLING_LAYERS_HPP
