#pragma once

// Low-rank plus sparse decomposition of a contrast series. The Casorati
// matrix (pixels x contrasts) is split as L + S, with L penalized by its
// nuclear norm and S by the l1 norm of its DFT along the contrast axis.

#include "rgmap/recon/admm.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <numbers>

namespace rgmap::recon {

struct LplusSResult {
    ContrastImageSet L;
    ContrastImageSet S;
    int iterations = 0;
    bool converged = false; // false: max_iters reached, last iterate returned
    std::vector<double> objective; // penalized objective after each sweep
    double dc_residual = 0.0;      // |mask * (A(L+S) - y)| / |y| on return

    ContrastImageSet image() const {
        ContrastImageSet out = L;
        for (std::size_t i = 0; i < out.images.size(); ++i) out.images[i] += S.images[i];
        return out;
    }
};

namespace detail {

using CasoratiMap = Eigen::Map<Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;
using ConstCasoratiMap =
    Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>>;

// A T x ny x nx stack is already a column-major (pixels x T) matrix.
inline ConstCasoratiMap casorati(const CArray& x) {
    return ConstCasoratiMap(x.data(), static_cast<Eigen::Index>(x.stride0()),
                            static_cast<Eigen::Index>(x.dim(0)));
}
inline CasoratiMap casorati(CArray& x) {
    return CasoratiMap(x.data(), static_cast<Eigen::Index>(x.stride0()), static_cast<Eigen::Index>(x.dim(0)));
}

// Unitary DFT along the contrast axis, per pixel.
inline void temporal_dft(const CArray& in, CArray& out, bool inverse) {
    const std::size_t nt = in.dim(0), np = in.stride0();
    out = CArray(in.shape());
    const double sgn = inverse ? 1.0 : -1.0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(nt));
    std::vector<cplx> tw(nt * nt);
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t t = 0; t < nt; ++t) {
            const double ang = sgn * 2.0 * std::numbers::pi * static_cast<double>((k * t) % nt) /
                               static_cast<double>(nt);
            tw[k * nt + t] = scale * cplx(std::cos(ang), std::sin(ang));
        }
    for (std::size_t k = 0; k < nt; ++k)
        for (std::size_t t = 0; t < nt; ++t) {
            const cplx w = tw[k * nt + t];
            const cplx* src = in.data() + t * np;
            cplx* dst = out.data() + k * np;
            for (std::size_t p = 0; p < np; ++p) dst[p] += w * src[p];
        }
}

inline double svt(const CArray& x, double lambda, CArray& out) {
    out = CArray(x.shape());
    auto X = casorati(x);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd s = svd.singularValues();
    double nuclear = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        s[i] = std::max(s[i] - lambda, 0.0);
        nuclear += s[i];
    }
    casorati(out) = svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
    return nuclear;
}

inline double nuclear_norm(const CArray& x) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(casorati(x));
    return svd.singularValues().sum();
}

inline double temporal_l1(const CArray& x) {
    CArray f;
    temporal_dft(x, f, false);
    double s = 0.0;
    for (const auto& v : f.vec()) s += std::abs(v);
    return s;
}

} // namespace detail

/// 1/2 |A(L+S) - y|^2 + lambda_L |L|_* + lambda_S |T S|_1.
inline double lplus_s_objective(const acq::MeasurementOperator& op, const acq::KSpaceData& y,
                                const CArray& L, const CArray& S, const LplusSConfig& cfg) {
    CArray x = L;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += S[i];
    CArray ax;
    op.apply(x, ax);
    double data = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) data += std::norm(ax[i] - y.y[i]);
    return 0.5 * data + cfg.lambda_L * detail::nuclear_norm(L) + cfg.lambda_S * detail::temporal_l1(S);
}

/// Minimum-norm correction delta with A delta = r, by CG on the normal
/// equations (CGLS). Stops when |A delta - r| <= tol * ref_norm.
inline CArray min_norm_correction(const acq::MeasurementOperator& op, const CArray& r_in, int iters,
                                  double tol, double ref_norm) {
    CArray r = r_in, s, p, q;
    op.apply_adjoint(r, s);
    CArray x(s.shape());
    p = s;
    double gamma = norm2_sq(s.flat());
    const double stop = tol * (ref_norm > 0.0 ? ref_norm : 1.0);
    for (int it = 0; it < iters && norm2(r.flat()) > stop && gamma > 0.0; ++it) {
        op.apply(p, q);
        const double qq = norm2_sq(q.flat());
        if (!(qq > 0.0)) break;
        const double alpha = gamma / qq;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * p[i];
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= alpha * q[i];
        op.apply_adjoint(r, s);
        const double gamma_new = norm2_sq(s.flat());
        const double beta = gamma_new / gamma;
        gamma = gamma_new;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = s[i] + beta * p[i];
    }
    if (!all_finite(x.flat())) throw ReconError("L+S: data-consistency solve diverged");
    return x;
}

/// Each sweep forms the gradient-step image M = X - A^H(A X - y) with
/// X = L + S, then updates L = SVT(M - S) and S = T^H soft(T(M - L)).
/// Because |A| <= 1 the sweep never increases the penalized objective.
inline LplusSResult ls_reconstruct(const acq::KSpaceData& y, const acq::CoilProfile& coils,
                                   const acq::SamplingMask& mask, const LplusSConfig& cfg) {
    cfg.validate();
    acq::KSpaceData data = y;
    data.mask = mask;
    const auto op = make_operator(data, coils);
    if (op.n_tsl() < 2) throw ReconError("ls_reconstruct: need at least two contrasts");
    const std::vector<double> tsl = tsl_or_index(data);
    const Shape shape{op.n_tsl(), op.ny(), op.nx()};
    const std::size_t n = shape_size(shape);

    CArray L(shape), S(shape), X(shape), M(shape), tmp(shape), ax, grad, f;
    LplusSResult res;
    for (int it = 0; it < cfg.max_iters; ++it) {
        op.apply(X, ax);
        for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= data.y[i];
        op.apply_adjoint(ax, grad);
        for (std::size_t i = 0; i < n; ++i) M[i] = X[i] - grad[i];

        for (std::size_t i = 0; i < n; ++i) tmp[i] = M[i] - S[i];
        detail::svt(tmp, cfg.lambda_L, L);

        for (std::size_t i = 0; i < n; ++i) tmp[i] = M[i] - L[i];
        detail::temporal_dft(tmp, f, false);
        for (auto& v : f.vec()) v = soft_threshold(v, cfg.lambda_S);
        detail::temporal_dft(f, S, true);

        double change = 0.0, prev = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const cplx x_new = L[i] + S[i];
            change += std::norm(x_new - X[i]);
            prev += std::norm(X[i]);
            X[i] = x_new;
        }
        res.iterations = it + 1;
        res.objective.push_back(lplus_s_objective(op, data, L, S, cfg));
        if (prev > 0.0 && std::sqrt(change / prev) < cfg.tol) {
            res.converged = true;
            break;
        }
        if (prev == 0.0 && change == 0.0) {
            res.converged = true;
            break;
        }
    }

    if (cfg.exact_dc) {
        op.apply(X, ax);
        for (std::size_t i = 0; i < ax.size(); ++i) ax[i] = data.y[i] - ax[i];
        const CArray delta =
            min_norm_correction(op, ax, cfg.dc_cg_iters, cfg.dc_cg_tol, norm2(data.y.flat()));
        for (std::size_t i = 0; i < n; ++i) {
            S[i] += delta[i];
            X[i] += delta[i];
        }
    }
    res.dc_residual = data_consistency_residual(op, X, data);
    res.L = ContrastImageSet(std::move(L), tsl);
    res.S = ContrastImageSet(std::move(S), tsl);
    return res;
}

} // namespace rgmap::recon
