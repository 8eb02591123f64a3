#include "hscat/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hscat::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void same_tape(const Var& a, const Var& b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) throw ConfigError("vars belong to different tapes");
}

void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void accumulate(Tensor& dst, const std::vector<double>& src) {
    for (std::size_t n = 0; n < src.size(); ++n) dst.data[n] += src[n];
}

}  // namespace

std::size_t element_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor extents must be positive");
        n *= std::size_t(d);
    }
    return n;
}

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t n = 0; n < shape.size(); ++n) out << (n ? "," : "") << shape[n];
    out << ']';
    return out.str();
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(element_count(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (element_count(shape) != data.size()) throw ShapeError("tensor data does not match its shape");
}

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

void Parameter::zero_grad() { grad = Tensor(value.shape, 0.0); }

const Tensor& Var::value() const { return tape_->node(id_).value; }
const Tensor& Var::grad() const { return tape_->grad_of(id_); }

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, Node&)> backward) {
    if (backward_done_) throw ConfigError("tape already consumed by backward(); call reset()");
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    if (requires_grad) n->backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, int(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

Var Tape::param(Parameter& p) {
    Var v = push(p.value, true, nullptr);
    node(v.id()).param = &p;
    return v;
}

Tensor& Tape::grad_of(int id) {
    Node& n = node(id);
    if (n.grad.data.size() != n.value.data.size()) n.grad = Tensor(n.value.shape, 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw ConfigError("loss is not on this tape");
    if (backward_done_) throw ConfigError("backward already ran on this tape");
    if (loss.value().size() != 1) throw ShapeError("backward requires a scalar loss");
    backward_done_ = true;
    grad_of(loss.id()).data[0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
        Node& n = node(id);
        if (!n.requires_grad || n.grad.data.empty()) continue;
        if (n.backward) n.backward(*this, n);
        if (n.param) {
            if (n.param->grad.data.size() != n.grad.data.size()) n.param->zero_grad();
            accumulate(n.param->grad, n.grad.data);
        }
    }
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

// ---- conv2d ---------------------------------------------------------------

namespace {

struct ConvGeom {
    int C, H, W, O, kh, kw, Ho, Wo;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& w, const Tensor& b, const Conv2dOptions& opt) {
    require_shape(x.rank() == 3, "conv2d input must be [C,H,W], got " + shape_string(x.shape));
    require_shape(w.rank() == 4, "conv2d weight must be [O,C,kh,kw]");
    require_shape(w.shape[1] == x.shape[0], "conv2d channel mismatch: input " + shape_string(x.shape) +
                                                " weight " + shape_string(w.shape));
    require_shape(b.rank() == 1 && b.shape[0] == w.shape[0], "conv2d bias must be [O]");
    if (opt.stride < 1 || opt.pad_h < 0 || opt.pad_w < 0) throw ConfigError("invalid conv2d options");
    ConvGeom g{x.shape[0], x.shape[1], x.shape[2], w.shape[0], w.shape[2], w.shape[3], 0, 0};
    g.Ho = (g.H + 2 * opt.pad_h - g.kh) / opt.stride + 1;
    g.Wo = (g.W + 2 * opt.pad_w - g.kw) / opt.stride + 1;
    require_shape(g.Ho > 0 && g.Wo > 0, "conv2d output would be empty");
    return g;
}

// cols [C*kh*kw, Ho*Wo]
void im2col(const double* x, const ConvGeom& g, const Conv2dOptions& opt, double* cols) {
    const int L = g.Ho * g.Wo;
    for (int c = 0; c < g.C; ++c)
        for (int u = 0; u < g.kh; ++u)
            for (int v = 0; v < g.kw; ++v) {
                double* row = cols + (std::size_t(c * g.kh + u) * g.kw + v) * L;
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * opt.stride - opt.pad_h + u;
                    double* out = row + oy * g.Wo;
                    if (iy < 0 || iy >= g.H) {
                        std::fill(out, out + g.Wo, 0.0);
                        continue;
                    }
                    const double* in = x + (std::size_t(c) * g.H + iy) * g.W;
                    for (int ox = 0; ox < g.Wo; ++ox) {
                        const int ix = ox * opt.stride - opt.pad_w + v;
                        out[ox] = (ix >= 0 && ix < g.W) ? in[ix] : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, const ConvGeom& g, const Conv2dOptions& opt, double* dx) {
    const int L = g.Ho * g.Wo;
    for (int c = 0; c < g.C; ++c)
        for (int u = 0; u < g.kh; ++u)
            for (int v = 0; v < g.kw; ++v) {
                const double* row = cols + (std::size_t(c * g.kh + u) * g.kw + v) * L;
                for (int oy = 0; oy < g.Ho; ++oy) {
                    const int iy = oy * opt.stride - opt.pad_h + u;
                    if (iy < 0 || iy >= g.H) continue;
                    double* out = dx + (std::size_t(c) * g.H + iy) * g.W;
                    for (int ox = 0; ox < g.Wo; ++ox) {
                        const int ix = ox * opt.stride - opt.pad_w + v;
                        if (ix >= 0 && ix < g.W) out[ix] += row[oy * g.Wo + ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d_direct(const Tensor& x, const Tensor& w, const Tensor& b, Conv2dOptions opt) {
    const ConvGeom g = conv_geometry(x, w, b, opt);
    Tensor out({g.O, g.Ho, g.Wo});
    for (int o = 0; o < g.O; ++o)
        for (int oy = 0; oy < g.Ho; ++oy)
            for (int ox = 0; ox < g.Wo; ++ox) {
                double acc = b.data[std::size_t(o)];
                for (int c = 0; c < g.C; ++c)
                    for (int u = 0; u < g.kh; ++u)
                        for (int v = 0; v < g.kw; ++v) {
                            const int iy = oy * opt.stride - opt.pad_h + u;
                            const int ix = ox * opt.stride - opt.pad_w + v;
                            if (iy < 0 || iy >= g.H || ix < 0 || ix >= g.W) continue;
                            acc += w.data[((std::size_t(o) * g.C + c) * g.kh + u) * g.kw + v] *
                                   x.data[(std::size_t(c) * g.H + iy) * g.W + ix];
                        }
                out.data[(std::size_t(o) * g.Ho + oy) * g.Wo + ox] = acc;
            }
    return out;
}

Var conv2d(Var x, Var weight, Var bias, Conv2dOptions opt) {
    same_tape(x, weight);
    same_tape(x, bias);
    Tape& tape = *x.tape();
    const ConvGeom g = conv_geometry(x.value(), weight.value(), bias.value(), opt);
    const int K = g.C * g.kh * g.kw, L = g.Ho * g.Wo;
    auto cols = std::make_shared<std::vector<double>>(std::size_t(K) * L);
    im2col(x.value().data.data(), g, opt, cols->data());
    Tensor out({g.O, g.Ho, g.Wo});
    MatMap o(out.data.data(), g.O, L);
    o.noalias() = ConstMatMap(weight.value().data.data(), g.O, K) * ConstMatMap(cols->data(), K, L);
    for (int c = 0; c < g.O; ++c) o.row(c).array() += bias.value().data[std::size_t(c)];

    const bool rg = tape.requires_grad(x.id()) || tape.requires_grad(weight.id()) || tape.requires_grad(bias.id());
    const int xi = x.id(), wi = weight.id(), bi = bias.id();
    return tape.push(std::move(out), rg, [=](Tape& t, Tape::Node& self) {
        const ConstMatMap dout(self.grad.data.data(), g.O, L);
        if (t.requires_grad(wi)) {
            MatMap dw(t.grad_of(wi).data.data(), g.O, K);
            dw.noalias() += dout * ConstMatMap(cols->data(), K, L).transpose();
        }
        if (t.requires_grad(bi)) {
            Tensor& db = t.grad_of(bi);
            for (int c = 0; c < g.O; ++c) db.data[std::size_t(c)] += dout.row(c).sum();
        }
        if (t.requires_grad(xi)) {
            RowMatrix dcols = ConstMatMap(t.node(wi).value.data.data(), g.O, K).transpose() * dout;
            col2im(dcols.data(), g, opt, t.grad_of(xi).data.data());
        }
    });
}

// ---- elementwise and structural ops -----------------------------------------

Var relu(Var x) {
    Tape& tape = *x.tape();
    Tensor out = x.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const int xi = x.id();
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        const Tensor& in = t.node(xi).value;
        Tensor& dx = t.grad_of(xi);
        for (std::size_t n = 0; n < in.size(); ++n)
            if (in.data[n] > 0.0) dx.data[n] += self.grad.data[n];
    });
}

Var dense(Var x, Var weight, Var bias) {
    same_tape(x, weight);
    same_tape(x, bias);
    Tape& tape = *x.tape();
    const Tensor& w = weight.value();
    require_shape(w.rank() == 2, "dense weight must be [out, in]");
    const int out_n = w.shape[0], in_n = w.shape[1];
    require_shape(int(x.value().size()) == in_n, "dense input size " + std::to_string(x.value().size()) +
                                                     " does not match weight " + shape_string(w.shape));
    require_shape(bias.value().size() == std::size_t(out_n), "dense bias must be [out]");
    Tensor out({out_n});
    Eigen::Map<Eigen::VectorXd>(out.data.data(), out_n) =
        ConstMatMap(w.data.data(), out_n, in_n) * Eigen::Map<const Eigen::VectorXd>(x.value().data.data(), in_n) +
        Eigen::Map<const Eigen::VectorXd>(bias.value().data.data(), out_n);
    const int xi = x.id(), wi = weight.id(), bi = bias.id();
    const bool rg = tape.requires_grad(xi) || tape.requires_grad(wi) || tape.requires_grad(bi);
    return tape.push(std::move(out), rg, [=](Tape& t, Tape::Node& self) {
        const Eigen::Map<const Eigen::VectorXd> g(self.grad.data.data(), out_n);
        if (t.requires_grad(wi)) {
            const Eigen::Map<const Eigen::VectorXd> xin(t.node(xi).value.data.data(), in_n);
            MatMap(t.grad_of(wi).data.data(), out_n, in_n).noalias() += g * xin.transpose();
        }
        if (t.requires_grad(bi)) Eigen::Map<Eigen::VectorXd>(t.grad_of(bi).data.data(), out_n) += g;
        if (t.requires_grad(xi)) {
            Eigen::Map<Eigen::VectorXd>(t.grad_of(xi).data.data(), in_n).noalias() +=
                ConstMatMap(t.node(wi).value.data.data(), out_n, in_n).transpose() * g;
        }
    });
}

Var concat(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat of nothing");
    Tape& tape = *xs.front().tape();
    std::vector<int> shape = xs.front().shape();
    require_shape(!shape.empty(), "concat needs tensors of rank >= 1");
    int total = 0;
    bool rg = false;
    std::vector<int> ids;
    for (const Var& v : xs) {
        same_tape(xs.front(), v);
        const auto& s = v.shape();
        require_shape(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1),
                      "concat: trailing extents differ");
        total += s[0];
        rg = rg || tape.requires_grad(v.id());
        ids.push_back(v.id());
    }
    shape[0] = total;
    Tensor out(shape);
    std::size_t off = 0;
    for (const Var& v : xs) {
        std::copy(v.value().data.begin(), v.value().data.end(), out.data.begin() + std::ptrdiff_t(off));
        off += v.value().size();
    }
    return tape.push(std::move(out), rg, [ids](Tape& t, Tape::Node& self) {
        std::size_t o = 0;
        for (int id : ids) {
            const std::size_t n = t.node(id).value.size();
            if (t.requires_grad(id)) {
                Tensor& g = t.grad_of(id);
                for (std::size_t k = 0; k < n; ++k) g.data[k] += self.grad.data[o + k];
            }
            o += n;
        }
    });
}

Var sum(Var x) {
    Tape& tape = *x.tape();
    const double s = std::accumulate(x.value().data.begin(), x.value().data.end(), 0.0);
    const int xi = x.id();
    return tape.push(Tensor({1}, s), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        for (double& g : t.grad_of(xi).data) g += self.grad.data[0];
    });
}

Var mean(Var x) { return scale(sum(x), 1.0 / double(x.value().size())); }

Var mean_axis(Var x, int axis) {
    Tape& tape = *x.tape();
    const auto& s = x.shape();
    if (axis < 0 || axis >= int(s.size())) throw ShapeError("mean_axis: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= std::size_t(s[std::size_t(a)]);
    for (std::size_t a = std::size_t(axis) + 1; a < s.size(); ++a) inner *= std::size_t(s[a]);
    const std::size_t n = std::size_t(s[std::size_t(axis)]);
    std::vector<int> os = s;
    os[std::size_t(axis)] = 1;
    Tensor out(os);
    const auto& in = x.value().data;
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += in[(o * n + a) * inner + i];
    for (double& v : out.data) v /= double(n);
    const int xi = x.id();
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        auto& g = t.grad_of(xi).data;
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t i = 0; i < inner; ++i)
                    g[(o * n + a) * inner + i] += self.grad.data[o * inner + i] / double(n);
    });
}

namespace {

template <typename Fwd, typename BackA, typename BackB>
Var binary(Var a, Var b, const char* name, Fwd fwd, BackA back_a, BackB back_b) {
    same_tape(a, b);
    Tape& tape = *a.tape();
    require_shape(a.shape() == b.shape(), std::string(name) + ": shape mismatch " + shape_string(a.shape()) +
                                              " vs " + shape_string(b.shape()));
    Tensor out(a.shape());
    for (std::size_t n = 0; n < out.size(); ++n) out.data[n] = fwd(a.value().data[n], b.value().data[n]);
    const int ai = a.id(), bi = b.id();
    const bool rg = tape.requires_grad(ai) || tape.requires_grad(bi);
    return tape.push(std::move(out), rg, [=](Tape& t, Tape::Node& self) {
        const auto& av = t.node(ai).value.data;
        const auto& bv = t.node(bi).value.data;
        if (t.requires_grad(ai)) {
            auto& g = t.grad_of(ai).data;
            for (std::size_t n = 0; n < g.size(); ++n) g[n] += back_a(self.grad.data[n], av[n], bv[n]);
        }
        if (t.requires_grad(bi)) {
            auto& g = t.grad_of(bi).data;
            for (std::size_t n = 0; n < g.size(); ++n) g[n] += back_b(self.grad.data[n], av[n], bv[n]);
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
        [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Var scale(Var x, double c) {
    Tape& tape = *x.tape();
    Tensor out = x.value();
    for (double& v : out.data) v *= c;
    const int xi = x.id();
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        auto& g = t.grad_of(xi).data;
        for (std::size_t n = 0; n < g.size(); ++n) g[n] += c * self.grad.data[n];
    });
}

Var reshape(Var x, std::vector<int> shape) {
    Tape& tape = *x.tape();
    require_shape(element_count(shape) == x.value().size(),
                  "reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
    Tensor out(std::move(shape), x.value().data);
    const int xi = x.id();
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        accumulate(t.grad_of(xi), self.grad.data);
    });
}

Var slice(Var x, int begin, int end) {
    Tape& tape = *x.tape();
    const auto& s = x.shape();
    require_shape(!s.empty() && begin >= 0 && end <= s[0] && begin < end, "slice out of range");
    std::vector<int> os = s;
    os[0] = end - begin;
    const std::size_t row = x.value().size() / std::size_t(s[0]);
    Tensor out(os);
    std::copy(x.value().data.begin() + std::ptrdiff_t(row * std::size_t(begin)),
              x.value().data.begin() + std::ptrdiff_t(row * std::size_t(end)), out.data.begin());
    const int xi = x.id();
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        auto& g = t.grad_of(xi).data;
        for (std::size_t n = 0; n < self.grad.size(); ++n) g[row * std::size_t(begin) + n] += self.grad.data[n];
    });
}

Var depth_to_space(Var x, int ry, int rx) {
    Tape& tape = *x.tape();
    const auto& s = x.shape();
    require_shape(s.size() == 3 && ry >= 1 && rx >= 1 && s[0] % (ry * rx) == 0,
                  "depth_to_space: input " + shape_string(s) + " incompatible with factors");
    const int C = s[0] / (ry * rx), H = s[1], W = s[2];
    const int Ho = H * ry, Wo = W * rx;
    // out(c, y*ry+dy, x*rx+dx) = in(c*ry*rx + dy*rx + dx, y, x)
    std::vector<std::size_t> src(std::size_t(C) * Ho * Wo);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
            for (int xx = 0; xx < Wo; ++xx) {
                const int ci = c * ry * rx + (y % ry) * rx + (xx % rx);
                src[(std::size_t(c) * Ho + y) * Wo + xx] = (std::size_t(ci) * H + y / ry) * W + xx / rx;
            }
    Tensor out({C, Ho, Wo});
    for (std::size_t n = 0; n < src.size(); ++n) out.data[n] = x.value().data[src[n]];
    const int xi = x.id();
    auto map = std::make_shared<std::vector<std::size_t>>(std::move(src));
    return tape.push(std::move(out), tape.requires_grad(xi), [=](Tape& t, Tape::Node& self) {
        auto& g = t.grad_of(xi).data;
        for (std::size_t n = 0; n < map->size(); ++n) g[(*map)[n]] += self.grad.data[n];
    });
}

Var outer3(Var v, Var m, int axis) {
    same_tape(v, m);
    Tape& tape = *v.tape();
    const auto& vs = v.shape();
    const auto& ms = m.shape();
    require_shape(vs.size() == 2 && ms.size() == 3 && vs[0] == ms[0],
                  "outer3 expects v [R,A] and m [R,P,Q], got " + shape_string(vs) + " and " + shape_string(ms));
    if (axis < 0 || axis > 2) throw ShapeError("outer3 axis must be 0, 1 or 2");
    const int R = vs[0], A = vs[1], P = ms[1], Q = ms[2];
    // Result extents [I, J, K].
    int I, J, K;
    if (axis == 0) { I = A; J = P; K = Q; }
    else if (axis == 1) { I = P; J = A; K = Q; }
    else { I = P; J = Q; K = A; }
    Tensor out({I, J, K});
    const double* vd = v.value().data.data();
    const double* md = m.value().data.data();
    // Unfolded: out_unfold[a, p*Q+q] = sum_r v[r,a] m[r,p,q], then permute.
    RowMatrix unfold = ConstMatMap(vd, R, A).transpose() * ConstMatMap(md, R, std::size_t(P) * Q);
    auto out_index = [=](int a, int p, int q) -> std::size_t {
        if (axis == 0) return (std::size_t(a) * J + p) * K + q;
        if (axis == 1) return (std::size_t(p) * J + a) * K + q;
        return (std::size_t(p) * J + q) * K + a;
    };
    for (int a = 0; a < A; ++a)
        for (int p = 0; p < P; ++p)
            for (int q = 0; q < Q; ++q) out.data[out_index(a, p, q)] = unfold(a, std::size_t(p) * Q + q);
    const int vi = v.id(), mi = m.id();
    const bool rg = tape.requires_grad(vi) || tape.requires_grad(mi);
    return tape.push(std::move(out), rg, [=](Tape& t, Tape::Node& self) {
        RowMatrix g(A, std::size_t(P) * Q);
        for (int a = 0; a < A; ++a)
            for (int p = 0; p < P; ++p)
                for (int q = 0; q < Q; ++q) g(a, std::size_t(p) * Q + q) = self.grad.data[out_index(a, p, q)];
        if (t.requires_grad(vi)) {
            // dv[r,a] = sum_pq m[r,pq] g[a,pq]
            MatMap(t.grad_of(vi).data.data(), R, A).noalias() +=
                ConstMatMap(t.node(mi).value.data.data(), R, std::size_t(P) * Q) * g.transpose();
        }
        if (t.requires_grad(mi)) {
            MatMap(t.grad_of(mi).data.data(), R, std::size_t(P) * Q).noalias() +=
                ConstMatMap(t.node(vi).value.data.data(), R, A) * g;
        }
    });
}

Var masked_l1(Var pred, const Tensor& target, const Tensor& mask) {
    Tape& tape = *pred.tape();
    require_shape(pred.value().size() == target.size() && target.size() == mask.size(),
                  "masked_l1: size mismatch");
    const double count = std::accumulate(mask.data.begin(), mask.data.end(), 0.0);
    if (!(count > 0.0)) throw ConfigError("masked_l1: empty mask");
    double s = 0.0;
    const auto& p = pred.value().data;
    for (std::size_t n = 0; n < p.size(); ++n) s += std::abs(p[n] - target.data[n]) * mask.data[n];
    const int pi = pred.id();
    auto tgt = std::make_shared<Tensor>(target);
    auto msk = std::make_shared<Tensor>(mask);
    return tape.push(Tensor({1}, s / count), tape.requires_grad(pi), [=](Tape& t, Tape::Node& self) {
        const auto& pv = t.node(pi).value.data;
        auto& g = t.grad_of(pi).data;
        const double up = self.grad.data[0] / count;
        for (std::size_t n = 0; n < g.size(); ++n) {
            const double d = pv[n] - tgt->data[n];
            const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            g[n] += up * sgn * msk->data[n];
        }
    });
}

Var mse(Var pred, const Tensor& target) {
    Tape& tape = *pred.tape();
    require_shape(pred.value().size() == target.size(), "mse: size mismatch");
    const auto& p = pred.value().data;
    double s = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) s += (p[n] - target.data[n]) * (p[n] - target.data[n]);
    const double count = double(p.size());
    const int pi = pred.id();
    auto tgt = std::make_shared<Tensor>(target);
    return tape.push(Tensor({1}, s / count), tape.requires_grad(pi), [=](Tape& t, Tape::Node& self) {
        const auto& pv = t.node(pi).value.data;
        auto& g = t.grad_of(pi).data;
        const double up = 2.0 * self.grad.data[0] / count;
        for (std::size_t n = 0; n < g.size(); ++n) g[n] += up * (pv[n] - tgt->data[n]);
    });
}

Var mse(Var a, Var b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

// ---- Adam -----------------------------------------------------------------

void AdamState::step(const AdamConfig& cfg, double* values, const double* grads, std::size_t n) {
    if (m_.size() != n) {
        m_.assign(n, 0.0);
        v_.assign(n, 0.0);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t_));
    for (std::size_t k = 0; k < n; ++k) {
        m_[k] = cfg.beta1 * m_[k] + (1.0 - cfg.beta1) * grads[k];
        v_[k] = cfg.beta2 * v_[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
        values[k] -= cfg.lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + cfg.eps);
    }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) state_.emplace_back(p->value.size());
}

void Adam::step() {
    for (std::size_t n = 0; n < params_.size(); ++n) {
        Parameter& p = *params_[n];
        if (p.grad.size() != p.value.size()) p.zero_grad();
        state_[n].step(cfg_, p.value.data.data(), p.grad.data.data(), p.value.size());
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

}  // namespace hscat::ad
