#include "hscat/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "hscat/parallel.hpp"

namespace hscat::tensor {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_match(const VMDecomposition& vm, Shape3 shape) {
    vm.validate();
    if (!(vm.shape == shape)) throw ShapeError("VM decomposition does not match the requested shape");
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

VMDecomposition::VMDecomposition(int r, Shape3 s) : rank(r), shape(s) {
    if (r < 1) throw ConfigError("VM rank must be >= 1");
    if (!s.positive()) throw ShapeError("VM shape must be positive");
    vx.assign(std::size_t(r) * s.i, 0.0);
    vy.assign(std::size_t(r) * s.j, 0.0);
    vz.assign(std::size_t(r) * s.k, 0.0);
    m_yz.assign(std::size_t(r) * s.j * s.k, 0.0);
    m_xz.assign(std::size_t(r) * s.i * s.k, 0.0);
    m_xy.assign(std::size_t(r) * s.i * s.j, 0.0);
}

void VMDecomposition::validate() const {
    if (rank < 1) throw ConfigError("VM rank must be >= 1");
    const auto r = std::size_t(rank);
    if (vx.size() != r * shape.i || vy.size() != r * shape.j || vz.size() != r * shape.k ||
        m_yz.size() != r * shape.j * shape.k || m_xz.size() != r * shape.i * shape.k ||
        m_xy.size() != r * shape.i * shape.j)
        throw ShapeError("VM component sizes are inconsistent with rank and shape");
    for (const auto* v : {&vx, &vy, &vz, &m_yz, &m_xz, &m_xy})
        if (!all_finite(*v)) throw ConfigError("VM components must be finite");
}

std::size_t VMDecomposition::parameter_count() const {
    return vx.size() + vy.size() + vz.size() + m_yz.size() + m_xz.size() + m_xy.size();
}

VMDecomposition VMDecomposition::lincomb(double a, const VMDecomposition& lhs, double b,
                                         const VMDecomposition& rhs) {
    if (!(lhs.shape == rhs.shape)) throw ShapeError("lincomb of VM decompositions with different shapes");
    VMDecomposition out(lhs.rank + rhs.rank, lhs.shape);
    auto join = [](std::vector<double>& o, double x, const std::vector<double>& p, double y,
                   const std::vector<double>& q) {
        std::size_t n = 0;
        for (double v : p) o[n++] = x * v;
        for (double v : q) o[n++] = y * v;
    };
    join(out.vx, a, lhs.vx, b, rhs.vx);
    join(out.vy, a, lhs.vy, b, rhs.vy);
    join(out.vz, a, lhs.vz, b, rhs.vz);
    join(out.m_yz, 1.0, lhs.m_yz, 1.0, rhs.m_yz);
    join(out.m_xz, 1.0, lhs.m_xz, 1.0, rhs.m_xz);
    join(out.m_xy, 1.0, lhs.m_xy, 1.0, rhs.m_xy);
    return out;
}

DenseGrid reconstruct(const VMDecomposition& vm, Shape3 shape) {
    require_match(vm, shape);
    const int I = shape.i, J = shape.j, K = shape.k, R = vm.rank;
    DenseGrid out(shape);
    parallel_for(std::size_t(I), [&](std::size_t ii) {
        const int i = int(ii);
        for (int j = 0; j < J; ++j)
            for (int k = 0; k < K; ++k) {
                double acc = 0.0;
                for (int r = 0; r < R; ++r) {
                    acc += vm.vx[std::size_t(r) * I + i] * vm.m_yz[(std::size_t(r) * J + j) * K + k];
                    acc += vm.vy[std::size_t(r) * J + j] * vm.m_xz[(std::size_t(r) * I + i) * K + k];
                    acc += vm.vz[std::size_t(r) * K + k] * vm.m_xy[(std::size_t(r) * I + i) * J + j];
                }
                out(i, j, k) = acc;
            }
    });
    return out;
}

double compression_ratio(int rank, Shape3 shape) {
    if (rank < 1 || !shape.positive()) throw ConfigError("invalid rank or shape");
    const double params = double(rank) * (shape.i + shape.j + shape.k) +
                          double(rank) * (double(shape.j) * shape.k + double(shape.i) * shape.k +
                                          double(shape.i) * shape.j);
    return params / double(shape.size());
}

double compression_ratio(const VMDecomposition& vm, Shape3 shape) {
    require_match(vm, shape);
    return double(vm.parameter_count()) / double(shape.size());
}

double relative_error(const DenseGrid& a, const DenseGrid& b) {
    if (!(a.shape() == b.shape())) throw ShapeError("relative_error: shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        num += (a[n] - b[n]) * (a[n] - b[n]);
        den += a[n] * a[n];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::sqrt(num);
    return std::sqrt(num / den);
}

namespace {

// The three VM blocks share one structure: unfold the tensor as
// (vector axis) x (plane), and the block term is V^T M with V: R x A, M: R x P.
struct BlockView {
    int axis_len;
    int plane_len;
    std::vector<double>* vec;
    std::vector<double>* mat;
};

// Unfolding index maps for axis a: (axis index, plane index) -> flat grid index.
std::size_t unfold_index(int axis, Shape3 s, int a, int p) {
    switch (axis) {
        case 0: return std::size_t(a) * s.j * s.k + p;  // plane (j, k)
        case 1: {
            const int i = p / s.k, k = p % s.k;  // plane (i, k)
            return (std::size_t(i) * s.j + a) * s.k + k;
        }
        default: {
            const int i = p / s.j, j = p % s.j;  // plane (i, j)
            return (std::size_t(i) * s.j + j) * s.k + a;
        }
    }
}

BlockView block(VMDecomposition& vm, int axis) {
    const Shape3 s = vm.shape;
    switch (axis) {
        case 0: return {s.i, s.j * s.k, &vm.vx, &vm.m_yz};
        case 1: return {s.j, s.i * s.k, &vm.vy, &vm.m_xz};
        default: return {s.k, s.i * s.j, &vm.vz, &vm.m_xy};
    }
}

}  // namespace

namespace {

// Unfolded A x P view of block `axis` of a grid.
RowMatrix unfold(const DenseGrid& g, int axis, const BlockView& b) {
    RowMatrix out(b.axis_len, b.plane_len);
    for (int a = 0; a < b.axis_len; ++a)
        for (int p = 0; p < b.plane_len; ++p) out(a, p) = g[unfold_index(axis, g.shape(), a, p)];
    return out;
}

// Best rank-R approximation; factors returned as V (R x A) and M (R x P).
void truncate(const RowMatrix& t, int R, RowMatrix& v, RowMatrix& m) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const int keep = std::min<int>(R, int(svd.singularValues().size()));
    v = RowMatrix::Zero(R, t.rows());
    m = RowMatrix::Zero(R, t.cols());
    for (int r = 0; r < keep; ++r) {
        const double sv = std::sqrt(svd.singularValues()(r));
        v.row(r) = svd.matrixU().col(r).transpose() * sv;
        m.row(r) = svd.matrixV().col(r).transpose() * sv;
    }
}

struct BlockState {
    RowMatrix v[3], m[3];
    RowMatrix term[3];  // v^T m, unfolded
};

double state_error(const DenseGrid& grid, double norm, const BlockState& st, const BlockView* views) {
    DenseGrid sum(grid.shape(), 0.0);
    for (int axis = 0; axis < 3; ++axis)
        for (int a = 0; a < views[axis].axis_len; ++a)
            for (int p = 0; p < views[axis].plane_len; ++p)
                sum[unfold_index(axis, grid.shape(), a, p)] += st.term[axis](a, p);
    double e = 0.0;
    for (std::size_t n = 0; n < sum.size(); ++n) e += (grid[n] - sum[n]) * (grid[n] - sum[n]);
    return std::sqrt(e) / norm;
}

// Flat parameter vector in the order vx, vy, vz, m_yz, m_xz, m_xy.
std::vector<double> flatten(const VMDecomposition& vm) {
    std::vector<double> out;
    out.reserve(vm.parameter_count());
    for (const auto* v : {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy})
        out.insert(out.end(), v->begin(), v->end());
    return out;
}

void unflatten(const std::vector<double>& x, VMDecomposition& vm) {
    std::size_t n = 0;
    for (auto* v : {&vm.vx, &vm.vy, &vm.vz, &vm.m_yz, &vm.m_xz, &vm.m_xy})
        for (double& e : *v) e = x[n++];
}

// Jacobian-vector product of reconstruct at vm along d (both flat layouts).
DenseGrid jvp(const VMDecomposition& vm, const VMDecomposition& d) {
    VMDecomposition a = vm, b = d;
    a.vx = d.vx, a.vy = d.vy, a.vz = d.vz;  // (dv, M)
    b.vx = vm.vx, b.vy = vm.vy, b.vz = vm.vz;  // (v, dM)
    DenseGrid out = reconstruct(a, vm.shape);
    const DenseGrid rhs = reconstruct(b, vm.shape);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += rhs[n];
    return out;
}

// Transposed Jacobian applied to a grid-shaped vector.
VMDecomposition vjp(const VMDecomposition& vm, const DenseGrid& g) {
    const Shape3 s = vm.shape;
    const int I = s.i, J = s.j, K = s.k;
    VMDecomposition out(vm.rank, s);
    for (int r = 0; r < vm.rank; ++r)
        for (int i = 0; i < I; ++i)
            for (int j = 0; j < J; ++j)
                for (int k = 0; k < K; ++k) {
                    const double e = g(i, j, k);
                    const std::size_t yz = (std::size_t(r) * J + j) * K + k;
                    const std::size_t xz = (std::size_t(r) * I + i) * K + k;
                    const std::size_t xy = (std::size_t(r) * I + i) * J + j;
                    out.vx[std::size_t(r) * I + i] += e * vm.m_yz[yz];
                    out.m_yz[yz] += e * vm.vx[std::size_t(r) * I + i];
                    out.vy[std::size_t(r) * J + j] += e * vm.m_xz[xz];
                    out.m_xz[xz] += e * vm.vy[std::size_t(r) * J + j];
                    out.vz[std::size_t(r) * K + k] += e * vm.m_xy[xy];
                    out.m_xy[xy] += e * vm.vz[std::size_t(r) * K + k];
                }
    return out;
}

// One damped Gauss-Newton step, (J^T J + mu I) d = -J^T r solved by CG.
VMDecomposition lm_step(const VMDecomposition& vm, const DenseGrid& residual, double mu, int cg_iters) {
    const std::vector<double> b = [&] {
        std::vector<double> g = flatten(vjp(vm, residual));
        for (double& e : g) e = -e;
        return g;
    }();
    const std::size_t n = b.size();
    std::vector<double> x(n, 0.0), r = b, p = b, ap(n);
    VMDecomposition tmp(vm.rank, vm.shape);
    double rr = 0.0;
    for (double e : r) rr += e * e;
    const double stop = rr * 1e-20;
    for (int it = 0; it < cg_iters && rr > stop; ++it) {
        unflatten(p, tmp);
        const std::vector<double> jtjp = flatten(vjp(vm, jvp(vm, tmp)));
        double pap = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            ap[m] = jtjp[m] + mu * p[m];
            pap += p[m] * ap[m];
        }
        if (pap <= 0.0) break;
        const double alpha = rr / pap;
        double rr_new = 0.0;
        for (std::size_t m = 0; m < n; ++m) {
            x[m] += alpha * p[m];
            r[m] -= alpha * ap[m];
            rr_new += r[m] * r[m];
        }
        for (std::size_t m = 0; m < n; ++m) p[m] = r[m] + (rr_new / rr) * p[m];
        rr = rr_new;
    }
    std::vector<double> cur = flatten(vm);
    for (std::size_t m = 0; m < n; ++m) cur[m] += x[m];
    VMDecomposition out(vm.rank, vm.shape);
    unflatten(cur, out);
    return out;
}

}  // namespace

FitResult fit_vm(const DenseGrid& grid, int rank, int iters, std::uint64_t seed) {
    if (rank < 1) throw ConfigError("fit_vm: rank must be >= 1");
    if (iters < 1) throw ConfigError("fit_vm: iters must be >= 1");
    const Shape3 s = grid.shape();
    FitResult result{VMDecomposition(rank, s), {}};
    VMDecomposition& vm = result.vm;

    double norm2 = 0.0;
    for (double v : grid.values()) norm2 += v * v;
    if (norm2 == 0.0) {
        result.relative_errors.assign(1, 0.0);
        return result;
    }
    const double norm = std::sqrt(norm2);
    const int R = rank;
    const BlockView views[3] = {block(vm, 0), block(vm, 1), block(vm, 2)};

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1e-2);
    BlockState st;
    for (int axis = 0; axis < 3; ++axis) {
        st.v[axis] = RowMatrix(R, views[axis].axis_len);
        st.m[axis] = RowMatrix(R, views[axis].plane_len);
        for (Eigen::Index n = 0; n < st.v[axis].size(); ++n) st.v[axis].data()[n] = gauss(rng);
        for (Eigen::Index n = 0; n < st.m[axis].size(); ++n) st.m[axis].data()[n] = gauss(rng);
        st.term[axis] = st.v[axis].transpose() * st.m[axis];
    }

    // Block coordinate descent: each block is replaced by the best rank-R fit
    // of the residual left by the other two. After each sweep an extrapolated
    // state is tried and kept only if it lowers the error.
    const RowMatrix g_unf[3] = {unfold(grid, 0, views[0]), unfold(grid, 1, views[1]), unfold(grid, 2, views[2])};
    auto fold_other = [&](const BlockState& bs, int axis) {
        DenseGrid other(s, 0.0);
        for (int o = 0; o < 3; ++o) {
            if (o == axis) continue;
            for (int a = 0; a < views[o].axis_len; ++a)
                for (int p = 0; p < views[o].plane_len; ++p) other[unfold_index(o, s, a, p)] += bs.term[o](a, p);
        }
        return unfold(other, axis, views[axis]);
    };

    BlockState prev = st;
    double step = 1.0;
    double mu = 1e-3 * norm2 / double(grid.size());
    double err = state_error(grid, norm, st, views);
    for (int sweep = 0; sweep < iters; ++sweep) {
        const BlockState before = st;
        for (int axis = 0; axis < 3; ++axis) {
            truncate(g_unf[axis] - fold_other(st, axis), R, st.v[axis], st.m[axis]);
            st.term[axis] = st.v[axis].transpose() * st.m[axis];
        }
        err = state_error(grid, norm, st, views);
        if (sweep > 0) {
            BlockState trial;
            for (int axis = 0; axis < 3; ++axis) {
                truncate(st.term[axis] + step * (st.term[axis] - prev.term[axis]), R, trial.v[axis], trial.m[axis]);
                trial.term[axis] = trial.v[axis].transpose() * trial.m[axis];
            }
            const double trial_err = state_error(grid, norm, trial, views);
            if (trial_err < err) {
                st = std::move(trial);
                err = trial_err;
                step = std::min(step * 2.0, 1000.0);
            } else {
                step = std::max(step * 0.5, 1.0);
            }
        }
        prev = before;

        // Joint refinement of all factors.
        for (int axis = 0; axis < 3; ++axis) {
            Eigen::Map<RowMatrix>(views[axis].vec->data(), R, views[axis].axis_len) = st.v[axis];
            Eigen::Map<RowMatrix>(views[axis].mat->data(), R, views[axis].plane_len) = st.m[axis];
        }
        DenseGrid residual = reconstruct(vm, s);
        for (std::size_t n = 0; n < residual.size(); ++n) residual[n] -= grid[n];
        const VMDecomposition cand = lm_step(vm, residual, mu, 30);
        const double cand_err = relative_error(grid, reconstruct(cand, s));
        if (cand_err < err) {
            err = cand_err;
            mu = std::max(mu * 0.3, 1e-12);
            vm = cand;
            for (int axis = 0; axis < 3; ++axis) {
                st.v[axis] = Eigen::Map<const RowMatrix>(views[axis].vec->data(), R, views[axis].axis_len);
                st.m[axis] = Eigen::Map<const RowMatrix>(views[axis].mat->data(), R, views[axis].plane_len);
                st.term[axis] = st.v[axis].transpose() * st.m[axis];
            }
        } else {
            mu *= 10.0;
        }
        result.relative_errors.push_back(err);
    }

    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Map<RowMatrix>(views[axis].vec->data(), R, views[axis].axis_len) = st.v[axis];
        Eigen::Map<RowMatrix>(views[axis].mat->data(), R, views[axis].plane_len) = st.m[axis];
    }
    result.relative_errors.back() = relative_error(grid, reconstruct(vm, s));
    return result;
}

TrilinearStencil trilinear_stencil(Shape3 shape, Vec3 p, const GridSpec& spec) {
    TrilinearStencil st{};
    if (!spec.contains(p)) return st;
    const double h = spec.voxel_size();
    const int dims[3] = {shape.i, shape.j, shape.k};
    int i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - spec.lo()) / h - 0.5;
        const double fl = std::floor(u);
        int lo = int(fl);
        double t = u - fl;
        if (lo < 0) {
            lo = 0;
            t = 0.0;
        } else if (lo >= dims[a] - 1) {
            lo = dims[a] - 1;
            t = 0.0;
        }
        i0[a] = lo;
        i1[a] = std::min(lo + 1, dims[a] - 1);
        f[a] = t;
    }
    for (int c = 0; c < 8; ++c) {
        const int ii = (c & 4) ? i1[0] : i0[0];
        const int jj = (c & 2) ? i1[1] : i0[1];
        const int kk = (c & 1) ? i1[2] : i0[2];
        st.index[c] = (std::size_t(ii) * shape.j + jj) * shape.k + kk;
        st.weight[c] = ((c & 4) ? f[0] : 1.0 - f[0]) * ((c & 2) ? f[1] : 1.0 - f[1]) *
                       ((c & 1) ? f[2] : 1.0 - f[2]);
    }
    st.valid = true;
    return st;
}

double sample_trilinear(const DenseGrid& grid, Vec3 p, const GridSpec& spec) {
    const TrilinearStencil st = trilinear_stencil(grid.shape(), p, spec);
    if (!st.valid) return 0.0;
    double v = 0.0;
    for (int c = 0; c < 8; ++c) v += st.weight[c] * grid[st.index[c]];
    return v;
}

std::uint8_t sample_nearest(const OccupancyMask& mask, Vec3 p, const GridSpec& spec) {
    if (!spec.contains(p)) return 0;
    const double h = spec.voxel_size();
    const Shape3 s = mask.shape();
    const int i = std::clamp(int((p.x - spec.lo()) / h), 0, s.i - 1);
    const int j = std::clamp(int((p.y - spec.lo()) / h), 0, s.j - 1);
    const int k = std::clamp(int((p.z - spec.lo()) / h), 0, s.k - 1);
    return mask(i, j, k);
}

void ScatterField::validate() const {
    if (!(sigma.shape() == albedo.shape())) throw ShapeError("sigma and albedo grids differ in shape");
    if (!std::isfinite(scale) || scale < 0.0) throw ConfigError("density scale must be finite and >= 0");
    for (double v : sigma.values())
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ConfigError("sigma values must lie in [0, 1]");
    for (double v : albedo.values())
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ConfigError("albedo values must lie in [0, 1]");
}

void ScatterField::validate(const DensityRange& range) const {
    validate();
    if (!range.contains(scale)) throw ConfigError("density scale outside the configured range");
}

}  // namespace hscat::tensor
