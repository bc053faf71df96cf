#include <microchar/cma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <microchar/errors.hpp>

namespace microchar {

namespace {

constexpr double kEigenFloor = 1e-14;

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

/// Refreshes the cached eigendecomposition with the eigenvalue floor repair.
void refresh_decomposition(CmaState& state) {
    const int n = state.params.dim;
    std::vector<double> eigvals;
    jacobi_eigen(state.cov, n, eigvals, state.eig_vectors);
    state.eig_sqrt.resize(static_cast<std::size_t>(n));
    bool repaired = false;
    for (int i = 0; i < n; ++i) {
        double ev = eigvals[static_cast<std::size_t>(i)];
        if (!std::isfinite(ev)) throw NotPositiveDefinite("cma: non-finite eigenvalue");
        if (ev < kEigenFloor) {
            ev = kEigenFloor;
            repaired = true;
        }
        state.eig_sqrt[static_cast<std::size_t>(i)] = std::sqrt(ev);
    }
    if (repaired) {
        // Reconstruct C = B * diag(floored) * B^T so state and cache agree.
        for (int r = 0; r < n; ++r) {
            for (int c = r; c < n; ++c) {
                double acc = 0.0;
                for (int k = 0; k < n; ++k) {
                    const double ev = state.eig_sqrt[static_cast<std::size_t>(k)] *
                                      state.eig_sqrt[static_cast<std::size_t>(k)];
                    acc += state.eig_vectors[static_cast<std::size_t>(r) * n + k] * ev *
                           state.eig_vectors[static_cast<std::size_t>(c) * n + k];
                }
                state.cov[static_cast<std::size_t>(r) * n + c] = acc;
                state.cov[static_cast<std::size_t>(c) * n + r] = acc;
            }
        }
    }
}

} // namespace

void jacobi_eigen(const std::vector<double>& sym, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    if (n < 1 || sym.size() != static_cast<std::size_t>(n) * n) {
        throw InvalidDim("jacobi_eigen: bad matrix size");
    }
    std::vector<double> a = sym;
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        }
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = eigvecs[static_cast<std::size_t>(k) * n + p];
                    const double vkq = eigvecs[static_cast<std::size_t>(k) * n + q];
                    eigvecs[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
                    eigvecs[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    eigvals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eigvals[static_cast<std::size_t>(i)] = at(i, i);
}

CmaState cma_init(int dim, const std::vector<double>& mean0, double sigma0, int lambda) {
    if (dim < 1) throw InvalidDim("cma_init: dim must be >= 1");
    if (!(sigma0 > 0.0)) throw InvalidDim("cma_init: sigma0 must be > 0");
    if (static_cast<int>(mean0.size()) != dim) throw InvalidDim("cma_init: mean0 length != dim");

    CmaState state;
    CmaParams& p = state.params;
    p.dim = dim;
    p.lambda = lambda > 0 ? lambda
                          : 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(dim))));
    if (p.lambda < 2) throw InvalidDim("cma_init: lambda must be >= 2");
    p.mu = p.lambda / 2;

    p.weights.resize(static_cast<std::size_t>(p.mu));
    double wsum = 0.0;
    for (int i = 0; i < p.mu; ++i) {
        p.weights[static_cast<std::size_t>(i)] =
            std::log(p.mu + 0.5) - std::log(static_cast<double>(i + 1));
        wsum += p.weights[static_cast<std::size_t>(i)];
    }
    double wsq = 0.0;
    for (double& w : p.weights) {
        w /= wsum;
        wsq += w * w;
    }
    p.mu_eff = 1.0 / wsq;

    const double n = static_cast<double>(dim);
    p.c_sigma = (p.mu_eff + 2.0) / (n + p.mu_eff + 5.0);
    p.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (n + 1.0)) - 1.0) + p.c_sigma;
    p.c_c = (4.0 + p.mu_eff / n) / (n + 4.0 + 2.0 * p.mu_eff / n);
    p.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mu_eff);
    p.c_mu = std::min(1.0 - p.c_1,
                      2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) / ((n + 2.0) * (n + 2.0) + p.mu_eff));
    p.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    state.mean = mean0;
    state.sigma = sigma0;
    state.cov.assign(static_cast<std::size_t>(dim) * dim, 0.0);
    for (int i = 0; i < dim; ++i) state.cov[static_cast<std::size_t>(i) * dim + i] = 1.0;
    state.path_sigma.assign(static_cast<std::size_t>(dim), 0.0);
    state.path_c.assign(static_cast<std::size_t>(dim), 0.0);
    refresh_decomposition(state);
    return state;
}

std::vector<std::vector<double>> cma_ask(const CmaState& state, Rng& rng) {
    const int n = state.params.dim;
    if (state.eig_vectors.size() != static_cast<std::size_t>(n) * n) {
        throw NotPositiveDefinite("cma_ask: missing decomposition");
    }
    std::vector<std::vector<double>> genomes(static_cast<std::size_t>(state.params.lambda));
    std::vector<double> z(static_cast<std::size_t>(n));
    for (auto& genome : genomes) {
        genome.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            z[static_cast<std::size_t>(i)] =
                state.eig_sqrt[static_cast<std::size_t>(i)] * rng.next_normal();
        }
        for (int r = 0; r < n; ++r) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                acc += state.eig_vectors[static_cast<std::size_t>(r) * n + k] *
                       z[static_cast<std::size_t>(k)];
            }
            genome[static_cast<std::size_t>(r)] = state.mean[static_cast<std::size_t>(r)] +
                                                  state.sigma * acc;
        }
    }
    return genomes;
}

void cma_tell(CmaState& state, const std::vector<std::vector<double>>& genomes,
              const std::vector<double>& fitnesses) {
    const CmaParams& p = state.params;
    const int n = p.dim;
    if (static_cast<int>(genomes.size()) != p.lambda ||
        static_cast<int>(fitnesses.size()) != p.lambda) {
        throw LengthMismatch("cma_tell: need lambda genomes and fitnesses");
    }
    for (const auto& g : genomes) {
        if (static_cast<int>(g.size()) != n) throw LengthMismatch("cma_tell: genome length != dim");
        if (!all_finite(g)) throw InvalidArgument("cma_tell: non-finite genome");
    }
    if (!all_finite(fitnesses)) throw InvalidArgument("cma_tell: non-finite fitness");

    // Rank candidates; exact ties resolve by index (stable).
    std::vector<int> order(static_cast<std::size_t>(p.lambda));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return fitnesses[static_cast<std::size_t>(a)] < fitnesses[static_cast<std::size_t>(b)];
    });

    const std::vector<double> mean_old = state.mean;

    // y_i = (x_i - m) / sigma for the mu best; y_w = sum w_i y_i.
    std::vector<std::vector<double>> ys(static_cast<std::size_t>(p.mu));
    std::vector<double> yw(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < p.mu; ++i) {
        const auto& x = genomes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        auto& y = ys[static_cast<std::size_t>(i)];
        y.resize(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) {
            y[static_cast<std::size_t>(d)] =
                (x[static_cast<std::size_t>(d)] - mean_old[static_cast<std::size_t>(d)]) /
                state.sigma;
            yw[static_cast<std::size_t>(d)] +=
                p.weights[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(d)];
        }
    }

    for (int d = 0; d < n; ++d) {
        state.mean[static_cast<std::size_t>(d)] =
            mean_old[static_cast<std::size_t>(d)] + state.sigma * yw[static_cast<std::size_t>(d)];
    }

    // Step-size path uses C^{-1/2} y_w = B D^{-1} B^T y_w (old decomposition).
    std::vector<double> tmp(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int r = 0; r < n; ++r) {
            acc += state.eig_vectors[static_cast<std::size_t>(r) * n + k] *
                   yw[static_cast<std::size_t>(r)];
        }
        tmp[static_cast<std::size_t>(k)] = acc / state.eig_sqrt[static_cast<std::size_t>(k)];
    }
    std::vector<double> cinv_yw(static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            acc += state.eig_vectors[static_cast<std::size_t>(r) * n + k] *
                   tmp[static_cast<std::size_t>(k)];
        }
        cinv_yw[static_cast<std::size_t>(r)] = acc;
    }

    const double cs_fac = std::sqrt(p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff);
    double ps_norm_sq = 0.0;
    for (int d = 0; d < n; ++d) {
        auto& ps = state.path_sigma[static_cast<std::size_t>(d)];
        ps = (1.0 - p.c_sigma) * ps + cs_fac * cinv_yw[static_cast<std::size_t>(d)];
        ps_norm_sq += ps * ps;
    }
    const double ps_norm = std::sqrt(ps_norm_sq);

    state.generation += 1;
    const double expo = 2.0 * static_cast<double>(state.generation);
    const double denom = std::sqrt(1.0 - std::pow(1.0 - p.c_sigma, expo));
    const bool h_sigma = ps_norm / denom < (1.4 + 2.0 / (n + 1.0)) * p.chi_n;

    const double cc_fac = std::sqrt(p.c_c * (2.0 - p.c_c) * p.mu_eff);
    for (int d = 0; d < n; ++d) {
        auto& pc = state.path_c[static_cast<std::size_t>(d)];
        pc = (1.0 - p.c_c) * pc + (h_sigma ? cc_fac * yw[static_cast<std::size_t>(d)] : 0.0);
    }

    // Covariance: rank-1 + rank-mu with the stall correction when h_sigma is
    // off.
    const double delta_h = (h_sigma ? 0.0 : 1.0) * p.c_c * (2.0 - p.c_c);
    const double base = 1.0 - p.c_1 - p.c_mu + p.c_1 * delta_h;
    for (int r = 0; r < n; ++r) {
        for (int c = r; c < n; ++c) {
            double v = base * state.cov[static_cast<std::size_t>(r) * n + c];
            v += p.c_1 * state.path_c[static_cast<std::size_t>(r)] *
                 state.path_c[static_cast<std::size_t>(c)];
            double rank_mu = 0.0;
            for (int i = 0; i < p.mu; ++i) {
                rank_mu += p.weights[static_cast<std::size_t>(i)] *
                           ys[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] *
                           ys[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
            }
            v += p.c_mu * rank_mu;
            state.cov[static_cast<std::size_t>(r) * n + c] = v;
            state.cov[static_cast<std::size_t>(c) * n + r] = v;
        }
    }

    state.sigma *= std::exp((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0));
    if (!std::isfinite(state.sigma) || state.sigma <= 0.0) {
        throw NotPositiveDefinite("cma_tell: step size collapsed");
    }
    refresh_decomposition(state);
}

} // namespace microchar
