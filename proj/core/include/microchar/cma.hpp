#pragma once

#include <vector>

#include <microchar/errors.hpp>
#include <microchar/rng.hpp>

namespace microchar {

/// Strategy constants derived from (dim, lambda) once at init.
struct CmaParams {
    int dim = 0;
    int lambda = 0;              ///< population size, default 4 + floor(3 ln n)
    int mu = 0;                  ///< parents, lambda/2
    std::vector<double> weights; ///< log-decreasing, normalized to sum 1
    double mu_eff = 0.0;
    double c_sigma = 0.0;
    double d_sigma = 0.0;
    double c_c = 0.0;
    double c_1 = 0.0;
    double c_mu = 0.0;
    double chi_n = 0.0; ///< E||N(0,I)||
};

/// Full CMA-ES strategy state. The covariance is kept symmetric
/// positive-definite by symmetrization plus an eigenvalue floor of 1e-14
/// applied after every update; the eigendecomposition is cached for sampling.
struct CmaState {
    CmaParams params;
    std::vector<double> mean;
    double sigma = 0.0;
    std::vector<double> cov; ///< dim x dim, row-major
    std::vector<double> path_sigma;
    std::vector<double> path_c;
    long generation = 0;

    std::vector<double> eig_vectors; ///< columns are eigenvectors
    std::vector<double> eig_sqrt;    ///< sqrt of the (floored) eigenvalues
};

/// lambda <= 0 selects the default 4 + floor(3 ln n).
CmaState cma_init(int dim, const std::vector<double>& mean0, double sigma0, int lambda = 0);

/// Samples lambda genomes from N(mean, sigma^2 C) through the cached
/// eigendecomposition. Deterministic given the rng stream.
std::vector<std::vector<double>> cma_ask(const CmaState& state, Rng& rng);

/// Rank-based update: weighted recombination of the best mu candidates,
/// cumulative step-size adaptation, rank-1 + rank-mu covariance update.
/// Fitness ties resolve by candidate index (stable sort).
void cma_tell(CmaState& state, const std::vector<std::vector<double>>& genomes,
              const std::vector<double>& fitnesses);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
/// eigvecs is column-major per eigenvalue: eigvecs[i*n + j] is component i of
/// eigenvector j.
void jacobi_eigen(const std::vector<double>& sym, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs);

} // namespace microchar
