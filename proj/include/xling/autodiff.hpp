// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every forward operation together with a backprop closure.
// backward() seeds the loss gradient and replays the record in reverse,
// accumulating into Parameter::grad for every parameter leaf that was lifted
// onto the tape. Tapes are single-threaded; independent tapes may run on
// independent threads.

#ifndef XLING_AUTODIFF_HPP
#define XLING_AUTODIFF_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "xling/tensor.hpp"

namespace xling::ad {

// A learnable tensor with its gradient accumulator.
struct Parameter {
    Tensor value;
    Tensor grad;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Tape;

// Lightweight handle to a tape node.
struct Value {
    Tape* tape = nullptr;
    std::size_t idx = 0;
};

class Tape {
public:
    // Constant input; no gradient is reported for it.
    Value leaf(Tensor v) { return push(std::move(v), nullptr); }

    // Parameter leaf: after backward(), d(loss)/d(param) is accumulated
    // into p.grad.
    Value param(Parameter& p) {
        Value v = push(p.value, nullptr);
        Parameter* bound = &p;
        std::size_t self = v.idx;
        nodes_[self].backprop = [this, self, bound]() {
            const Tensor& g = nodes_[self].grad;
            for (std::size_t i = 0; i < g.data.size(); ++i) bound->grad.data[i] += g.data[i];
        };
        return v;
    }

    const Tensor& value(Value v) const { return nodes_[v.idx].value; }
    const Tensor& grad(Value v) const { return nodes_[v.idx].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient accumulator for a node; marks it live so backward() visits it.
    // Used by op backprop closures.
    Tensor& grad_mut(Value v) {
        nodes_[v.idx].touched = true;
        return nodes_[v.idx].grad;
    }

    // Seeds d(loss)/d(loss) = seed and replays the tape in reverse. The loss
    // must be a scalar produced on this tape.
    void backward(Value loss, double seed = 1.0) {
        if (loss.tape != this) throw std::invalid_argument("backward: value from another tape");
        Node& top = nodes_[loss.idx];
        if (!top.value.is_scalar())
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(top.value.shape));
        top.grad.data[0] += seed;
        top.touched = true;
        for (std::size_t i = loss.idx + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.touched && n.backprop) n.backprop();
        }
    }

private:
    friend struct OpBuilder;

    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> backprop;
        bool touched = false;
    };

    Value push(Tensor v, std::function<void()> bp) {
        Node n;
        n.grad = Tensor(v.shape);
        n.value = std::move(v);
        n.backprop = std::move(bp);
        nodes_.push_back(std::move(n));
        return Value{this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
};

// Shared plumbing for defining ops: collects parent handles and installs the
// backprop closure on the result node.
struct OpBuilder {
    Tape* tape;

    explicit OpBuilder(Value a) : tape(a.tape) {}
    OpBuilder(Value a, Value b) : tape(a.tape) {
        if (a.tape != b.tape) throw std::invalid_argument("op: values from different tapes");
    }

    const Tensor& val(Value v) const { return tape->value(v); }

    // Creates the result node and installs bp(tape, out_grad, out_value).
    template <class F>
    Value make_simple(Tensor out, F&& bp) {
        Value r = tape->push(std::move(out), nullptr);
        Tape* t = tape;
        std::size_t self = r.idx;
        t->nodes_[self].backprop = [t, self, bp = std::forward<F>(bp)]() {
            bp(*t, t->nodes_[self].grad, t->nodes_[self].value);
        };
        return r;
    }
};

namespace detail {
inline Tensor& pgrad(Tape& t, Value v) { return t.grad_mut(v); }
}  // namespace detail

// ---------------------------------------------------------------------------
// forward ops
// ---------------------------------------------------------------------------

inline Value matmul(Value a, Value b) {
    OpBuilder ob(a, b);
    const Tensor& A = ob.val(a);
    const Tensor& B = ob.val(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(A.shape) + " x " +
                                    shape_str(B.shape));
    Tensor C({A.rows(), B.cols()});
    matmul_acc(A, B, C);
    return ob.make_simple(std::move(C), [a, b](Tape& t, const Tensor& g, const Tensor&) {
        matmul_nt_acc(g, t.value(b), detail::pgrad(t, a));  // dA += g B^T
        matmul_tn_acc(t.value(a), g, detail::pgrad(t, b));  // dB += A^T g
    });
}

inline Value transpose(Value a) {
    OpBuilder ob(a);
    const Tensor& A = ob.val(a);
    if (A.ndim() != 2) throw std::invalid_argument("transpose: need 2-d tensor");
    Tensor C({A.cols(), A.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) C.at(j, i) = A.at(i, j);
    return ob.make_simple(std::move(C), [a](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) da.at(j, i) += g.at(i, j);
    });
}

inline Value add(Value a, Value b) {
    OpBuilder ob(a, b);
    const Tensor& A = ob.val(a);
    const Tensor& B = ob.val(b);
    check_same_shape(A, B, "add");
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C.data[i] += B.data[i];
    return ob.make_simple(std::move(C), [a, b](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        Tensor& db = detail::pgrad(t, b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            da.data[i] += g.data[i];
            db.data[i] += g.data[i];
        }
    });
}

inline Value sub(Value a, Value b) {
    OpBuilder ob(a, b);
    const Tensor& A = ob.val(a);
    const Tensor& B = ob.val(b);
    check_same_shape(A, B, "sub");
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C.data[i] -= B.data[i];
    return ob.make_simple(std::move(C), [a, b](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        Tensor& db = detail::pgrad(t, b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            da.data[i] += g.data[i];
            db.data[i] -= g.data[i];
        }
    });
}

// elementwise product
inline Value mul(Value a, Value b) {
    OpBuilder ob(a, b);
    const Tensor& A = ob.val(a);
    const Tensor& B = ob.val(b);
    check_same_shape(A, B, "mul");
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C.data[i] *= B.data[i];
    return ob.make_simple(std::move(C), [a, b](Tape& t, const Tensor& g, const Tensor&) {
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        Tensor& da = detail::pgrad(t, a);
        Tensor& db = detail::pgrad(t, b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            da.data[i] += g.data[i] * B.data[i];
            db.data[i] += g.data[i] * A.data[i];
        }
    });
}

inline Value scale(Value a, double c) {
    OpBuilder ob(a);
    Tensor C = ob.val(a);
    for (double& v : C.data) v *= c;
    return ob.make_simple(std::move(C), [a, c](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < g.numel(); ++i) da.data[i] += c * g.data[i];
    });
}

// m (n x d) + v (d), broadcast over rows
inline Value add_rowvec(Value m, Value v) {
    OpBuilder ob(m, v);
    const Tensor& M = ob.val(m);
    const Tensor& V = ob.val(v);
    if (M.ndim() != 2 || V.ndim() != 1 || V.shape[0] != M.cols())
        throw std::invalid_argument("add_rowvec: shapes " + shape_str(M.shape) + " + " +
                                    shape_str(V.shape));
    Tensor C = M;
    for (std::size_t i = 0; i < M.rows(); ++i)
        for (std::size_t j = 0; j < M.cols(); ++j) C.at(i, j) += V.at(j);
    return ob.make_simple(std::move(C), [m, v](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& dm = detail::pgrad(t, m);
        Tensor& dv = detail::pgrad(t, v);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                dm.at(i, j) += g.at(i, j);
                dv.at(j) += g.at(i, j);
            }
    });
}

// m + s, s a 1-element tensor broadcast everywhere
inline Value add_scalar(Value m, Value s) {
    OpBuilder ob(m, s);
    const Tensor& M = ob.val(m);
    const Tensor& S = ob.val(s);
    if (!S.is_scalar()) throw std::invalid_argument("add_scalar: bias must be 1-element");
    Tensor C = M;
    for (double& x : C.data) x += S.data[0];
    return ob.make_simple(std::move(C), [m, s](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& dm = detail::pgrad(t, m);
        Tensor& ds = detail::pgrad(t, s);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            dm.data[i] += g.data[i];
            ds.data[0] += g.data[i];
        }
    });
}

inline Value concat_cols(Value a, Value b) {
    OpBuilder ob(a, b);
    const Tensor& A = ob.val(a);
    const Tensor& B = ob.val(b);
    if (A.ndim() != 2 || B.ndim() != 2 || A.rows() != B.rows())
        throw std::invalid_argument("concat_cols: row mismatch");
    const std::size_t n = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor C({n, ca + cb});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ca; ++j) C.at(i, j) = A.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) C.at(i, ca + j) = B.at(i, j);
    }
    return ob.make_simple(std::move(C), [a, b, ca, cb](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        Tensor& db = detail::pgrad(t, b);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) da.at(i, j) += g.at(i, j);
            for (std::size_t j = 0; j < cb; ++j) db.at(i, j) += g.at(i, ca + j);
        }
    });
}

inline Value concat_cols(const std::vector<Value>& vs) {
    if (vs.empty()) throw std::invalid_argument("concat_cols: empty list");
    Value r = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i) r = concat_cols(r, vs[i]);
    return r;
}

// Stacks n row vectors (each 1 x d) into an n x d matrix.
inline Value stack_rows(const std::vector<Value>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty list");
    OpBuilder ob(rows[0]);
    const std::size_t d = ob.val(rows[0]).cols();
    Tensor C({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& R = rows[i].tape->value(rows[i]);
        if (R.rows() != 1 || R.cols() != d)
            throw std::invalid_argument("stack_rows: rows must all be 1 x d");
        for (std::size_t j = 0; j < d; ++j) C.at(i, j) = R.at(0, j);
    }
    return ob.make_simple(std::move(C), [rows](Tape& t, const Tensor& g, const Tensor&) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
            Tensor& dr = detail::pgrad(t, rows[i]);
            for (std::size_t j = 0; j < g.cols(); ++j) dr.at(0, j) += g.at(i, j);
        }
    });
}

// Stacks k column vectors (each length n) into an n x k matrix.
inline Value stack_cols(const std::vector<Value>& cols) {
    if (cols.empty()) throw std::invalid_argument("stack_cols: empty list");
    OpBuilder ob(cols[0]);
    const std::size_t n = ob.val(cols[0]).numel();
    Tensor C({n, cols.size()});
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const Tensor& V = cols[k].tape->value(cols[k]);
        if (V.ndim() != 1 || V.numel() != n)
            throw std::invalid_argument("stack_cols: columns must all be length-n vectors");
        for (std::size_t i = 0; i < n; ++i) C.at(i, k) = V.at(i);
    }
    return ob.make_simple(std::move(C), [cols](Tape& t, const Tensor& g, const Tensor&) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
            Tensor& dc = detail::pgrad(t, cols[k]);
            for (std::size_t i = 0; i < g.rows(); ++i) dc.at(i) += g.at(i, k);
        }
    });
}

// rows [begin, end) of a matrix
inline Value slice_rows(Value m, std::size_t begin, std::size_t end) {
    OpBuilder ob(m);
    const Tensor& M = ob.val(m);
    if (M.ndim() != 2 || begin > end || end > M.rows())
        throw std::invalid_argument("slice_rows: bad range");
    const std::size_t d = M.cols();
    Tensor C({end - begin, d});
    std::copy(M.data.begin() + begin * d, M.data.begin() + end * d, C.data.begin());
    return ob.make_simple(std::move(C), [m, begin, d](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& dm = detail::pgrad(t, m);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) dm.at(begin + i, j) += g.at(i, j);
    });
}

// row gather; backward scatter-adds, so repeated indices accumulate
inline Value gather_rows(Value m, std::vector<std::size_t> idx) {
    OpBuilder ob(m);
    const Tensor& M = ob.val(m);
    if (M.ndim() != 2) throw std::invalid_argument("gather_rows: need matrix");
    const std::size_t d = M.cols();
    Tensor C({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= M.rows()) throw std::invalid_argument("gather_rows: index out of range");
        for (std::size_t j = 0; j < d; ++j) C.at(i, j) = M.at(idx[i], j);
    }
    return ob.make_simple(std::move(C),
                          [m, idx = std::move(idx), d](Tape& t, const Tensor& g, const Tensor&) {
                              Tensor& dm = detail::pgrad(t, m);
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                  for (std::size_t j = 0; j < d; ++j)
                                      dm.at(idx[i], j) += g.at(i, j);
                          });
}

inline Value sigmoid(Value a) {
    OpBuilder ob(a);
    Tensor C = ob.val(a);
    for (double& v : C.data) {
        // stable in both tails
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return ob.make_simple(std::move(C), [a](Tape& t, const Tensor& g, const Tensor& y) {
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < g.numel(); ++i)
            da.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
}

inline Value tanh(Value a) {
    OpBuilder ob(a);
    Tensor C = ob.val(a);
    for (double& v : C.data) v = std::tanh(v);
    return ob.make_simple(std::move(C), [a](Tape& t, const Tensor& g, const Tensor& y) {
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < g.numel(); ++i)
            da.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    });
}

// natural log; domain x > 0
inline Value log(Value a) {
    OpBuilder ob(a);
    Tensor C = ob.val(a);
    for (double& v : C.data) v = std::log(v);
    return ob.make_simple(std::move(C), [a](Tape& t, const Tensor& g, const Tensor&) {
        const Tensor& A = t.value(a);
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < g.numel(); ++i) da.data[i] += g.data[i] / A.data[i];
    });
}

// Row-wise softmax for matrices; plain softmax for vectors.
inline Value softmax(Value a) {
    OpBuilder ob(a);
    const Tensor& A = ob.val(a);
    Tensor C = A;
    const std::size_t nrows = A.ndim() == 2 ? A.rows() : 1;
    const std::size_t d = A.ndim() == 2 ? A.cols() : A.numel();
    for (std::size_t i = 0; i < nrows; ++i) {
        double* row = &C.data[i * d];
        double mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < d; ++j) row[j] /= z;
    }
    return ob.make_simple(std::move(C), [a, nrows, d](Tape& t, const Tensor& g, const Tensor& y) {
        Tensor& da = detail::pgrad(t, a);
        for (std::size_t i = 0; i < nrows; ++i) {
            const double* grow = &g.data[i * d];
            const double* yrow = &y.data[i * d];
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += grow[j] * yrow[j];
            double* darow = &da.data[i * d];
            for (std::size_t j = 0; j < d; ++j) darow[j] += (grow[j] - dot) * yrow[j];
        }
    });
}

inline Value sum(Value a) {
    OpBuilder ob(a);
    const Tensor& A = ob.val(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    return ob.make_simple(Tensor::scalar(s), [a](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        for (double& v : da.data) v += g.data[0];
    });
}

inline Value mean(Value a) {
    OpBuilder ob(a);
    const Tensor& A = ob.val(a);
    const double n = static_cast<double>(A.numel());
    double s = 0.0;
    for (double v : A.data) s += v;
    return ob.make_simple(Tensor::scalar(s / n), [a, n](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& da = detail::pgrad(t, a);
        for (double& v : da.data) v += g.data[0] / n;
    });
}

// sum over columns: (n x d) -> (n)
inline Value row_sum(Value m) {
    OpBuilder ob(m);
    const Tensor& M = ob.val(m);
    if (M.ndim() != 2) throw std::invalid_argument("row_sum: need matrix");
    Tensor C({M.rows()});
    for (std::size_t i = 0; i < M.rows(); ++i)
        for (std::size_t j = 0; j < M.cols(); ++j) C.at(i) += M.at(i, j);
    return ob.make_simple(std::move(C), [m](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& dm = detail::pgrad(t, m);
        for (std::size_t i = 0; i < dm.rows(); ++i)
            for (std::size_t j = 0; j < dm.cols(); ++j) dm.at(i, j) += g.at(i);
    });
}

// Row-wise layer normalization with learned gain/bias (both length d).
inline Value layer_norm_rows(Value m, Value gain, Value bias, double eps = 1e-8) {
    OpBuilder ob(m, gain);
    const Tensor& M = ob.val(m);
    const Tensor& G = ob.val(gain);
    const Tensor& B = bias.tape->value(bias);
    const std::size_t n = M.rows(), d = M.cols();
    if (G.numel() != d || B.numel() != d)
        throw std::invalid_argument("layer_norm_rows: gain/bias must be length d");
    Tensor C({n, d});
    Tensor xhat({n, d});
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += M.at(i, j);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = M.at(i, j) - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat.at(i, j) = (M.at(i, j) - mu) * inv_std[i];
            C.at(i, j) = G.at(j) * xhat.at(i, j) + B.at(j);
        }
    }
    return ob.make_simple(
        std::move(C), [m, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                       d](Tape& t, const Tensor& g, const Tensor&) {
            const Tensor& G = t.value(gain);
            Tensor& dm = detail::pgrad(t, m);
            Tensor& dg = detail::pgrad(t, gain);
            Tensor& db = detail::pgrad(t, bias);
            for (std::size_t i = 0; i < n; ++i) {
                double mean_dxhat = 0.0, mean_dxhat_x = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = g.at(i, j) * G.at(j);
                    mean_dxhat += dxh;
                    mean_dxhat_x += dxh * xhat.at(i, j);
                    dg.at(j) += g.at(i, j) * xhat.at(i, j);
                    db.at(j) += g.at(i, j);
                }
                mean_dxhat /= static_cast<double>(d);
                mean_dxhat_x /= static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    const double dxh = g.at(i, j) * G.at(j);
                    dm.at(i, j) += inv_std[i] * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_x);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// losses (mean-reduced scalars, numerically stable)
// ---------------------------------------------------------------------------

// Binary cross-entropy on logits against targets in [0,1]; mean over elements.
inline Value bce_with_logits(Value logits, const Tensor& targets) {
    OpBuilder ob(logits);
    const Tensor& X = ob.val(logits);
    check_same_shape(X, targets, "bce_with_logits");
    for (double t : targets.data)
        if (t < 0.0 || t > 1.0) throw std::invalid_argument("bce_with_logits: target outside [0,1]");
    const double n = static_cast<double>(X.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < X.numel(); ++i) {
        const double x = X.data[i], t = targets.data[i];
        // max(x,0) - x t + log(1 + exp(-|x|))
        loss += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    return ob.make_simple(
        Tensor::scalar(loss / n), [logits, targets, n](Tape& t, const Tensor& g, const Tensor&) {
            const Tensor& X = t.value(logits);
            Tensor& dx = detail::pgrad(t, logits);
            for (std::size_t i = 0; i < X.numel(); ++i) {
                const double x = X.data[i];
                const double s =
                    x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                dx.data[i] += g.data[0] * (s - targets.data[i]) / n;
            }
        });
}

// Multiclass cross-entropy. logits is (n x k) with one class index per row,
// or a length-k vector with a single class index; mean over rows.
inline Value cross_entropy(Value logits, const std::vector<std::size_t>& classes) {
    OpBuilder ob(logits);
    const Tensor& X = ob.val(logits);
    const std::size_t n = X.ndim() == 2 ? X.rows() : 1;
    const std::size_t k = X.ndim() == 2 ? X.cols() : X.numel();
    if (classes.size() != n) throw std::invalid_argument("cross_entropy: class count mismatch");
    for (std::size_t c : classes)
        if (c >= k) throw std::invalid_argument("cross_entropy: class index out of range");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &X.data[i * k];
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
        loss += mx + std::log(z) - row[classes[i]];
    }
    const double dn = static_cast<double>(n);
    return ob.make_simple(
        Tensor::scalar(loss / dn),
        [logits, classes, n, k, dn](Tape& t, const Tensor& g, const Tensor&) {
            const Tensor& X = t.value(logits);
            Tensor& dx = detail::pgrad(t, logits);
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = &X.data[i * k];
                double mx = row[0];
                for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                double z = 0.0;
                for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
                for (std::size_t j = 0; j < k; ++j) {
                    double p = std::exp(row[j] - mx) / z;
                    if (j == classes[i]) p -= 1.0;
                    dx.data[i * k + j] += g.data[0] * p / dn;
                }
            }
        });
}

inline Value cross_entropy(Value logits, std::size_t cls) {
    return cross_entropy(logits, std::vector<std::size_t>{cls});
}

// Mean squared error against a constant target.
inline Value mse(Value pred, const Tensor& target) {
    OpBuilder ob(pred);
    const Tensor& X = ob.val(pred);
    check_same_shape(X, target, "mse");
    const double n = static_cast<double>(X.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < X.numel(); ++i) {
        const double d = X.data[i] - target.data[i];
        loss += d * d;
    }
    return ob.make_simple(Tensor::scalar(loss / n),
                          [pred, target, n](Tape& t, const Tensor& g, const Tensor&) {
                              const Tensor& X = t.value(pred);
                              Tensor& dx = detail::pgrad(t, pred);
                              for (std::size_t i = 0; i < X.numel(); ++i)
                                  dx.data[i] += g.data[0] * 2.0 * (X.data[i] - target.data[i]) / n;
                          });
}

}  // namespace xling::ad

#endif  // XLING_AUTODIFF_HPP
