#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gazectl/error.hpp"
#include "gazectl/numcore/params.hpp"
#include "gazectl/numcore/tensor.hpp"

namespace gazectl::nc {

/// Keeps large tape buffers on the heap instead of fresh mmap pages per allocation.
inline void retain_large_allocations() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 512 << 20);
        return true;
    }();
    (void)done;
#endif
}

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape over 2-D values. Nodes are appended in evaluation order, so walking
/// the tape backwards visits every node once after all of its consumers.
///
/// A graph is single-use and single-threaded: build it, read values, call backward()
/// at most once. With `record = false` no backward closures are kept (inference).
template <class T>
class Graph {
   public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<Mat>;
    using CMapM = Eigen::Map<const Mat>;
    using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

    explicit Graph(bool record = true) : record_(record) {
        retain_large_allocations();
        nodes_.reserve(1024);
    }

    Var constant(Tensor<T> value) { return push(std::move(value), false); }

    /// Leaf bound to params[index]; backward() accumulates into params[index].grad.
    Var param(ParamSet<T>& params, std::size_t index) {
        if (params_ != nullptr && params_ != &params)
            throw Error(ErrorCode::InvalidConfig, "a graph can bind only one parameter set");
        params_ = &params;
        auto v = push(params[index].value, record_);
        param_links_.emplace_back(v.id, index);
        return v;
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // -- linear algebra -------------------------------------------------------

    Var matmul(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.cols() != B.rows())
            throw Error(ErrorCode::ShapeMismatch, "matmul " + shape_str(A.shape) + " x " + shape_str(B.shape));
        Tensor<T> out = Tensor<T>::uninit_matrix(A.rows(), B.cols());
        map(out).noalias() = cmap(A) * cmap(B);
        return record(std::move(out), {a, b}, [this, a, b](std::size_t o) {
            if (needs(a)) accumulate(a, cmapg(o) * cmap(value(b)).transpose());
            if (needs(b)) accumulate(b, cmap(value(a)).transpose() * cmapg(o));
        });
    }

    /// a * b^T
    Var matmul_nt(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.cols() != B.cols())
            throw Error(ErrorCode::ShapeMismatch, "matmul_nt " + shape_str(A.shape) + " x " + shape_str(B.shape) + "^T");
        Tensor<T> out = Tensor<T>::uninit_matrix(A.rows(), B.rows());
        map(out).noalias() = cmap(A) * cmap(B).transpose();
        return record(std::move(out), {a, b}, [this, a, b](std::size_t o) {
            if (needs(a)) accumulate(a, cmapg(o) * cmap(value(b)));
            if (needs(b)) accumulate(b, cmapg(o).transpose() * cmap(value(a)));
        });
    }

    // -- elementwise ----------------------------------------------------------

    Var add(Var a, Var b) {
        same_shape(a, b, "add");
        Tensor<T> out = value(a);
        map(out) += cmap(value(b));
        return record(std::move(out), {a, b}, [this, a, b](std::size_t o) {
            if (needs(a)) accumulate(a, cmapg(o));
            if (needs(b)) accumulate(b, cmapg(o));
        });
    }

    Var mul(Var a, Var b) {
        same_shape(a, b, "mul");
        Tensor<T> out = value(a);
        map(out).array() *= cmap(value(b)).array();
        return record(std::move(out), {a, b}, [this, a, b](std::size_t o) {
            if (needs(a)) accumulate(a, (cmapg(o).array() * cmap(value(b)).array()).matrix());
            if (needs(b)) accumulate(b, (cmapg(o).array() * cmap(value(a)).array()).matrix());
        });
    }

    Var scale(Var a, T s) {
        Tensor<T> out = value(a);
        map(out) *= s;
        return record(std::move(out), {a}, [this, a, s](std::size_t o) { accumulate(a, s * cmapg(o)); });
    }

    /// a (n x c) + row vector b (1 x c) broadcast over rows.
    Var add_row(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (B.size() != A.cols())
            throw Error(ErrorCode::ShapeMismatch, "add_row " + shape_str(A.shape) + " + " + shape_str(B.shape));
        Tensor<T> out = A;
        map(out).rowwise() += crow(B);
        return record(std::move(out), {a, b}, [this, a, b](std::size_t o) {
            if (needs(a)) accumulate(a, cmapg(o));
            if (needs(b)) growmap(b) += cmapg(o).colwise().sum();
        });
    }

    /// a ((k*p) x c) + p (p x c) repeated over k row blocks.
    Var add_tiled(Var a, Var p) {
        const auto& A = value(a);
        const auto& P = value(p);
        if (P.cols() != A.cols() || P.rows() == 0 || A.rows() % P.rows() != 0)
            throw Error(ErrorCode::ShapeMismatch, "add_tiled " + shape_str(A.shape) + " + " + shape_str(P.shape));
        Tensor<T> out = A;
        const auto tiles = static_cast<Eigen::Index>(A.rows() / P.rows());
        const auto pr = static_cast<Eigen::Index>(P.rows());
        for (Eigen::Index t = 0; t < tiles; ++t) map(out).middleRows(t * pr, pr) += cmap(P);
        return record(std::move(out), {a, p}, [this, a, p, tiles, pr](std::size_t o) {
            if (needs(a)) accumulate(a, cmapg(o));
            if (needs(p))
                for (Eigen::Index t = 0; t < tiles; ++t) gmap(p) += cmapg(o).middleRows(t * pr, pr);
        });
    }

    Var tanh(Var a) {
        Tensor<T> out = value(a);
        map(out).array() = map(out).array().tanh();
        return record(std::move(out), {a}, [this, a](std::size_t o) {
            const auto y = cmap(nodes_[o].value).array();
            accumulate(a, (cmapg(o).array() * (T(1) - y * y)).matrix());
        });
    }

    Var sigmoid(Var a) {
        Tensor<T> out = value(a);
        map(out).array() = map(out).array().logistic();
        return record(std::move(out), {a}, [this, a](std::size_t o) {
            const auto y = cmap(nodes_[o].value).array();
            accumulate(a, (cmapg(o).array() * y * (T(1) - y)).matrix());
        });
    }

    /// x * sigmoid(x)
    Var swish(Var a) {
        Tensor<T> out = value(a);
        map(out).array() = cmap(value(a)).array() * cmap(value(a)).array().logistic();
        return record(std::move(out), {a}, [this, a](std::size_t o) {
            const auto x = cmap(value(a)).array();
            const auto s = x.logistic();
            accumulate(a, (cmapg(o).array() * s * (T(1) + x * (T(1) - s))).matrix());
        });
    }

    // -- reshaping ------------------------------------------------------------

    Var block(Var a, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
        const auto& A = value(a);
        if (r0 + nr > A.rows() || c0 + nc > A.cols())
            throw Error(ErrorCode::ShapeMismatch, "block [" + std::to_string(r0) + "+" + std::to_string(nr) + ", " +
                                                      std::to_string(c0) + "+" + std::to_string(nc) + "] of " + shape_str(A.shape));
        Tensor<T> out = Tensor<T>::uninit_matrix(nr, nc);
        const auto R0 = idx(r0), NR = idx(nr), C0 = idx(c0), NC = idx(nc);
        map(out) = cmap(A).block(R0, C0, NR, NC);
        return record(std::move(out), {a}, [this, a, R0, NR, C0, NC](std::size_t o) { gmap(a).block(R0, C0, NR, NC) += cmapg(o); });
    }

    Var slice_rows(Var a, std::size_t start, std::size_t count) { return block(a, start, count, 0, value(a).cols()); }
    Var slice_cols(Var a, std::size_t start, std::size_t width) { return block(a, 0, value(a).rows(), start, width); }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
        const std::size_t r = value(parts[0]).rows();
        std::size_t c = 0;
        for (auto p : parts) {
            if (value(p).rows() != r) throw Error(ErrorCode::ShapeMismatch, "concat_cols row mismatch " + shape_str(value(p).shape));
            c += value(p).cols();
        }
        Tensor<T> out = Tensor<T>::uninit_matrix(r, c);
        std::size_t off = 0;
        for (auto p : parts) {
            map(out).middleCols(idx(off), idx(value(p).cols())) = cmap(value(p));
            off += value(p).cols();
        }
        return record(std::move(out), parts, [this, parts](std::size_t o) {
            std::size_t off = 0;
            for (auto p : parts) {
                const auto w = idx(value(p).cols());
                if (needs(p)) accumulate(p, cmapg(o).middleCols(idx(off), w));
                off += value(p).cols();
            }
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_rows of nothing");
        const std::size_t c = value(parts[0]).cols();
        std::size_t r = 0;
        for (auto p : parts) {
            if (value(p).cols() != c) throw Error(ErrorCode::ShapeMismatch, "concat_rows col mismatch " + shape_str(value(p).shape));
            r += value(p).rows();
        }
        Tensor<T> out = Tensor<T>::uninit_matrix(r, c);
        std::size_t off = 0;
        for (auto p : parts) {
            map(out).middleRows(idx(off), idx(value(p).rows())) = cmap(value(p));
            off += value(p).rows();
        }
        return record(std::move(out), parts, [this, parts](std::size_t o) {
            std::size_t off = 0;
            for (auto p : parts) {
                const auto h = idx(value(p).rows());
                if (needs(p)) accumulate(p, cmapg(o).middleRows(idx(off), h));
                off += value(p).rows();
            }
        });
    }

    // -- normalisation / reductions -------------------------------------------

    /// Row-wise softmax with max subtraction.
    Var softmax_rows(Var a) {
        Tensor<T> out = value(a);
        auto y = map(out);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            const T mx = y.row(r).maxCoeff();
            y.row(r).array() = (y.row(r).array() - mx).exp();
            y.row(r) /= y.row(r).sum();
        }
        return record(std::move(out), {a}, [this, a](std::size_t o) {
            const auto Y = cmap(nodes_[o].value);
            const auto dY = cmapg(o);
            const auto dots = (dY.array() * Y.array()).rowwise().sum().eval();
            accumulate(a, (Y.array() * (dY.array().colwise() - dots)).matrix());
        });
    }

    /// Normalises each row to zero mean / unit variance, then scales by gamma and shifts by beta (both 1 x c).
    Var layer_norm_rows(Var a, Var gamma, Var beta, T eps = T(1e-3)) {
        const auto& A = value(a);
        const auto c = A.cols();
        if (value(gamma).size() != c || value(beta).size() != c)
            throw Error(ErrorCode::ShapeMismatch, "layer_norm " + shape_str(A.shape) + " with gamma " + shape_str(value(gamma).shape));
        Tensor<T> xhat = A;
        std::vector<T> inv_std(A.rows());
        auto X = map(xhat);
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const T mean = X.row(r).mean();
            X.row(r).array() -= mean;
            const T var = X.row(r).squaredNorm() / static_cast<T>(c);
            inv_std[static_cast<std::size_t>(r)] = T(1) / std::sqrt(var + eps);
            X.row(r) *= inv_std[static_cast<std::size_t>(r)];
        }
        Tensor<T> out = xhat;
        map(out).array().rowwise() *= crow(value(gamma)).array();
        map(out).rowwise() += crow(value(beta));
        return record(std::move(out), {a, gamma, beta},
                      [this, a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::size_t o) {
                          const auto Xh = cmap(xhat);
                          const auto dY = cmapg(o);
                          if (needs(gamma)) growmap(gamma) += (dY.array() * Xh.array()).colwise().sum().matrix();
                          if (needs(beta)) growmap(beta) += dY.colwise().sum();
                          if (!needs(a)) return;
                          const auto n = static_cast<T>(Xh.cols());
                          const Mat dxh = (dY.array().rowwise() * crow(value(gamma)).array()).matrix();
                          auto dA = gmap(a);
                          for (Eigen::Index r = 0; r < dxh.rows(); ++r) {
                              const T s1 = dxh.row(r).sum();
                              const T s2 = dxh.row(r).dot(Xh.row(r));
                              dA.row(r).array() += inv_std[static_cast<std::size_t>(r)] / n *
                                                   (n * dxh.row(r).array() - s1 - Xh.row(r).array() * s2);
                          }
                      });
    }

    /// Column-wise max over consecutive groups of `group` rows: (k*group) x c -> k x c.
    Var group_max_rows(Var a, std::size_t group) {
        const auto& A = value(a);
        if (group == 0 || A.rows() % group != 0)
            throw Error(ErrorCode::ShapeMismatch, "group_max_rows group " + std::to_string(group) + " of " + shape_str(A.shape));
        const std::size_t k = A.rows() / group, c = A.cols();
        Tensor<T> out = Tensor<T>::matrix(k, c);
        std::vector<std::size_t> arg(k * c);
        for (std::size_t g = 0; g < k; ++g)
            for (std::size_t j = 0; j < c; ++j) {
                std::size_t best = g * group;
                for (std::size_t r = g * group + 1; r < (g + 1) * group; ++r)
                    if (A(r, j) > A(best, j)) best = r;
                arg[g * c + j] = best;
                out(g, j) = A(best, j);
            }
        return record(std::move(out), {a}, [this, a, arg = std::move(arg), c](std::size_t o) {
            auto& dA = grad_of(a);
            const auto& dY = nodes_[o].grad;
            for (std::size_t i = 0; i < arg.size(); ++i) dA(arg[i], i % c) += dY.data[i];
        });
    }

    Var sum(Var a) {
        Tensor<T> out = Tensor<T>::scalar(cmap(value(a)).sum());
        return record(std::move(out), {a}, [this, a](std::size_t o) { gmap(a).array() += nodes_[o].grad.data[0]; });
    }

    /// Mean over rows of -log(probs[row, label]).
    Var cross_entropy(Var probs, std::span<const int> labels) {
        const auto& P = value(probs);
        if (labels.size() != P.rows())
            throw Error(ErrorCode::ShapeMismatch, "cross_entropy " + shape_str(P.shape) + " with " + std::to_string(labels.size()) + " labels");
        constexpr T kTiny = std::numeric_limits<T>::min();
        T loss = 0;
        for (std::size_t r = 0; r < P.rows(); ++r) {
            const int y = labels[r];
            if (y < 0 || static_cast<std::size_t>(y) >= P.cols())
                throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(y) + " outside " + std::to_string(P.cols()) + " classes");
            loss -= std::log(std::max(P(r, static_cast<std::size_t>(y)), kTiny));
        }
        const T n = static_cast<T>(P.rows());
        std::vector<int> ys(labels.begin(), labels.end());
        return record(Tensor<T>::scalar(loss / n), {probs}, [this, probs, ys = std::move(ys), n](std::size_t o) {
            auto& dP = grad_of(probs);
            const auto& Pv = value(probs);
            const T g = nodes_[o].grad.data[0];
            for (std::size_t r = 0; r < ys.size(); ++r) {
                const auto y = static_cast<std::size_t>(ys[r]);
                dP(r, y) -= g / (n * std::max(Pv(r, y), std::numeric_limits<T>::min()));
            }
        });
    }

    // -- backward ---------------------------------------------------------------

    void backward(Var loss) {
        if (!record_) throw Error(ErrorCode::InvalidConfig, "backward on a non-recording graph");
        if (value(loss).size() != 1)
            throw Error(ErrorCode::NotScalarLoss, "loss has shape " + shape_str(value(loss).shape));
        grad_of(loss).data[0] += T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.back && !n.grad.data.empty()) n.back(i);
        }
        if (params_ != nullptr) {
            for (auto [node, pi] : param_links_) {
                const auto& g = nodes_[node].grad;
                if (g.data.empty()) continue;
                auto& dst = (*params_)[pi].grad.data;
                for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g.data[k];
            }
            params_->mark_grads_ready();
        }
    }

   private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void(std::size_t)> back;
        bool needs_grad = false;
    };

    static Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }
    static MapM map(Tensor<T>& t) { return MapM(t.data.data(), idx(t.rows()), idx(t.cols())); }
    static CMapM cmap(const Tensor<T>& t) { return CMapM(t.data.data(), idx(t.rows()), idx(t.cols())); }
    static Eigen::Map<const RowVec> crow(const Tensor<T>& t) { return Eigen::Map<const RowVec>(t.data.data(), idx(t.size())); }

    Var push(Tensor<T> value, bool needs) {
        nodes_.push_back(Node{std::move(value), {}, {}, needs && record_});
        return Var{nodes_.size() - 1};
    }

    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    Tensor<T>& grad_of(Var v) {
        auto& n = nodes_[v.id];
        if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
        return n.grad;
    }
    MapM gmap(Var v) { return map(grad_of(v)); }

    /// grad(v) += e, assigning instead when v has no gradient buffer yet.
    template <class Expr>
    void accumulate(Var v, const Expr& e) {
        auto& n = nodes_[v.id];
        if (n.grad.data.empty()) {
            n.grad = Tensor<T>::uninit(n.value.shape);
            map(n.grad).noalias() = e;
        } else {
            map(n.grad).noalias() += e;
        }
    }
    Eigen::Map<RowVec> growmap(Var v) {
        auto& g = grad_of(v);
        return Eigen::Map<RowVec>(g.data.data(), idx(g.size()));
    }
    CMapM cmapg(std::size_t id) const { return cmap(nodes_[id].grad); }

    template <class Back>
    Var record(Tensor<T> out, const std::vector<Var>& inputs, Back&& back) {
        bool any = false;
        for (auto in : inputs) any = any || needs(in);
        auto v = push(std::move(out), any);
        if (any) nodes_[v.id].back = std::forward<Back>(back);
        return v;
    }

    void same_shape(Var a, Var b, const char* op) const {
        if (value(a).shape != value(b).shape)
            throw Error(ErrorCode::ShapeMismatch, std::string(op) + " " + shape_str(value(a).shape) + " vs " + shape_str(value(b).shape));
    }

    bool record_;
    std::vector<Node> nodes_;
    ParamSet<T>* params_ = nullptr;
    std::vector<std::pair<std::size_t, std::size_t>> param_links_;
};

}  // namespace gazectl::nc
