#pragma once

// Small dense-layer toolkit used by the point transformer. Every layer keeps
// its parameters and gradient accumulators together; backward passes take the
// forward inputs explicitly so inference stays const and reentrant.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pic/rng.hpp"

namespace pic {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
MatX<S> gelu(const MatX<S>& x) {
    return x.unaryExpr([](S v) {
        return static_cast<S>(0.5) * v *
               (static_cast<S>(1) + static_cast<S>(std::erf(static_cast<double>(v) * M_SQRT1_2)));
    });
}

template <typename S>
MatX<S> gelu_backward(const MatX<S>& x, const MatX<S>& dy) {
    MatX<S> dx = x.unaryExpr([](S v) {
        const double d = static_cast<double>(v);
        const double cdf = 0.5 * (1.0 + std::erf(d * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * d * d) / std::sqrt(2.0 * M_PI);
        return static_cast<S>(cdf + d * pdf);
    });
    return dx.cwiseProduct(dy);
}

template <typename S>
struct Dense {
    MatX<S> w;  // out x in
    MatX<S> b;  // 1 x out
    MatX<S> gw, gb;

    void init(int in, int out, Rng& rng, double std_dev = 0.02) {
        w.resize(out, in);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            w.data()[i] = static_cast<S>(rng.normal() * std_dev);
        }
        b = MatX<S>::Zero(1, out);
        gw = MatX<S>::Zero(out, in);
        gb = MatX<S>::Zero(1, out);
    }

    MatX<S> forward(const MatX<S>& x) const {
        MatX<S> y = x * w.transpose();
        y.rowwise() += b.row(0);
        return y;
    }

    // accumulates parameter grads, returns grad w.r.t. x
    MatX<S> backward(const MatX<S>& x, const MatX<S>& dy) {
        gw.noalias() += dy.transpose() * x;
        gb.row(0) += dy.colwise().sum();
        return dy * w;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".w", w, gw, true);
        fn(prefix + ".b", b, gb, false);
    }
};

template <typename S>
struct LayerNorm {
    static constexpr double kEps = 1e-5;
    MatX<S> g, b;  // 1 x dim
    MatX<S> gg, gb;

    struct Cache {
        MatX<S> xhat;
        Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std;
    };

    void init(int dim) {
        g = MatX<S>::Ones(1, dim);
        b = MatX<S>::Zero(1, dim);
        gg = MatX<S>::Zero(1, dim);
        gb = MatX<S>::Zero(1, dim);
    }

    MatX<S> forward(const MatX<S>& x, Cache& c) const {
        const Eigen::Index d = x.cols();
        c.xhat.resize(x.rows(), d);
        c.inv_std.resize(x.rows());
        MatX<S> y(x.rows(), d);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const S mu = x.row(r).mean();
            const auto centered = x.row(r).array() - mu;
            const S var = centered.square().sum() / static_cast<S>(d);
            const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + kEps));
            c.inv_std(r) = inv;
            c.xhat.row(r) = (centered * inv).matrix();
            y.row(r) = c.xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
        }
        return y;
    }

    MatX<S> backward(const MatX<S>& dy, const Cache& c) {
        const Eigen::Index d = dy.cols();
        gg.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
        gb.row(0) += dy.colwise().sum();
        MatX<S> dx(dy.rows(), d);
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            const auto dxhat = dy.row(r).cwiseProduct(g.row(0));
            const S s1 = dxhat.sum();
            const S s2 = dxhat.cwiseProduct(c.xhat.row(r)).sum();
            dx.row(r) = ((dxhat.array() * static_cast<S>(d) - s1 - c.xhat.row(r).array() * s2) *
                         (c.inv_std(r) / static_cast<S>(d)))
                            .matrix();
        }
        return dx;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".g", g, gg, false);
        fn(prefix + ".b", b, gb, false);
    }
};

template <typename S>
struct Attention {
    int heads = 1;
    Dense<S> qkv;   // dim -> 3*dim
    Dense<S> proj;  // dim -> dim

    struct Cache {
        MatX<S> x;                 // T x dim
        MatX<S> qkv_out;           // T x 3*dim
        std::vector<MatX<S>> att;  // per head, T x T softmax rows
        MatX<S> concat;            // T x dim, pre-projection
    };

    void init(int dim, int n_heads, Rng& rng) {
        if (dim % n_heads != 0) throw std::invalid_argument("attention: dim % heads != 0");
        heads = n_heads;
        qkv.init(dim, 3 * dim, rng);
        proj.init(dim, dim, rng);
    }

    MatX<S> forward(const MatX<S>& x, Cache& c) const {
        const Eigen::Index t = x.rows();
        const Eigen::Index dim = x.cols();
        const Eigen::Index hd = dim / heads;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

        c.x = x;
        c.qkv_out = qkv.forward(x);
        c.att.assign(heads, {});
        c.concat.resize(t, dim);
        for (int h = 0; h < heads; ++h) {
            const auto q = c.qkv_out.block(0, h * hd, t, hd);
            const auto k = c.qkv_out.block(0, dim + h * hd, t, hd);
            const auto v = c.qkv_out.block(0, 2 * dim + h * hd, t, hd);
            MatX<S> scores = q * k.transpose() * scale;
            for (Eigen::Index r = 0; r < t; ++r) {
                const S mx = scores.row(r).maxCoeff();
                scores.row(r) = (scores.row(r).array() - mx).exp().matrix();
                scores.row(r) /= scores.row(r).sum();
            }
            c.att[h] = std::move(scores);
            c.concat.block(0, h * hd, t, hd).noalias() = c.att[h] * v;
        }
        return proj.forward(c.concat);
    }

    MatX<S> backward(const MatX<S>& dy, const Cache& c) {
        const Eigen::Index t = c.x.rows();
        const Eigen::Index dim = c.x.cols();
        const Eigen::Index hd = dim / heads;
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

        const MatX<S> dconcat = proj.backward(c.concat, dy);
        MatX<S> dqkv = MatX<S>::Zero(t, 3 * dim);
        for (int h = 0; h < heads; ++h) {
            const auto q = c.qkv_out.block(0, h * hd, t, hd);
            const auto k = c.qkv_out.block(0, dim + h * hd, t, hd);
            const auto v = c.qkv_out.block(0, 2 * dim + h * hd, t, hd);
            const auto dout = dconcat.block(0, h * hd, t, hd);
            const MatX<S>& att = c.att[h];

            MatX<S> datt = dout * v.transpose();
            dqkv.block(0, 2 * dim + h * hd, t, hd).noalias() = att.transpose() * dout;
            // softmax jacobian per row
            MatX<S> dscores(t, t);
            for (Eigen::Index r = 0; r < t; ++r) {
                const S dot = datt.row(r).cwiseProduct(att.row(r)).sum();
                dscores.row(r) =
                    att.row(r).cwiseProduct((datt.row(r).array() - dot).matrix());
            }
            dqkv.block(0, h * hd, t, hd).noalias() = dscores * k * scale;
            dqkv.block(0, dim + h * hd, t, hd).noalias() = dscores.transpose() * q * scale;
        }
        return qkv.backward(c.x, dqkv);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        qkv.visit(prefix + ".qkv", fn);
        proj.visit(prefix + ".proj", fn);
    }
};

// pre-LN transformer block: x + attn(ln1(x)), then + mlp(ln2(.))
template <typename S>
struct Block {
    LayerNorm<S> ln1, ln2;
    Attention<S> attn;
    Dense<S> fc1, fc2;  // dim -> 4*dim -> dim

    struct Cache {
        typename LayerNorm<S>::Cache ln1c, ln2c;
        typename Attention<S>::Cache attc;
        MatX<S> x0, h, ln2_out, fc1_out, act;
    };

    void init(int dim, int n_heads, Rng& rng) {
        ln1.init(dim);
        ln2.init(dim);
        attn.init(dim, n_heads, rng);
        fc1.init(dim, 4 * dim, rng);
        fc2.init(4 * dim, dim, rng);
    }

    MatX<S> forward(const MatX<S>& x, Cache& c) const {
        c.x0 = x;
        c.h = x + attn.forward(ln1.forward(x, c.ln1c), c.attc);
        c.ln2_out = ln2.forward(c.h, c.ln2c);
        c.fc1_out = fc1.forward(c.ln2_out);
        c.act = gelu(c.fc1_out);
        return c.h + fc2.forward(c.act);
    }

    MatX<S> backward(const MatX<S>& dy, Cache& c) {
        MatX<S> dact = fc2.backward(c.act, dy);
        MatX<S> dfc1 = gelu_backward(c.fc1_out, dact);
        MatX<S> dh = dy + ln2.backward(fc1.backward(c.ln2_out, dfc1), c.ln2c);
        MatX<S> dln1 = attn.backward(dh, c.attc);
        return dh + ln1.backward(dln1, c.ln1c);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        ln1.visit(prefix + ".ln1", fn);
        attn.visit(prefix + ".attn", fn);
        ln2.visit(prefix + ".ln2", fn);
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
    }
};

// column-wise max over row segments; first row wins ties
template <typename S>
MatX<S> segment_maxpool(const MatX<S>& x, int seg_len, Eigen::MatrixXi& argmax) {
    if (seg_len < 1 || x.rows() % seg_len != 0) throw std::invalid_argument("segment_maxpool");
    const Eigen::Index n_seg = x.rows() / seg_len;
    MatX<S> out(n_seg, x.cols());
    argmax.resize(n_seg, x.cols());
    for (Eigen::Index s = 0; s < n_seg; ++s) {
        out.row(s) = x.row(s * seg_len);
        for (Eigen::Index c = 0; c < x.cols(); ++c) argmax(s, c) = 0;
        for (int j = 1; j < seg_len; ++j) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                const S v = x(s * seg_len + j, c);
                if (v > out(s, c)) {
                    out(s, c) = v;
                    argmax(s, c) = j;
                }
            }
        }
    }
    return out;
}

template <typename S>
MatX<S> segment_maxpool_backward(const MatX<S>& dout, int seg_len, const Eigen::MatrixXi& argmax) {
    MatX<S> dx = MatX<S>::Zero(dout.rows() * seg_len, dout.cols());
    for (Eigen::Index s = 0; s < dout.rows(); ++s) {
        for (Eigen::Index c = 0; c < dout.cols(); ++c) {
            dx(s * seg_len + argmax(s, c), c) += dout(s, c);
        }
    }
    return dx;
}

}  // namespace pic
