#pragma once

#include <span>
#include <vector>

#include "siamgcn/common.hpp"

namespace siamgcn {

/// Weighted undirected graph: symmetric, non-negative, zero diagonal.
struct Adjacency {
  Matrix w;

  Eigen::Index size() const { return w.rows(); }

  /// Throws ValidationError unless the invariants above hold.
  void validate() const;
};

struct Laplacian {
  Matrix l;
  /// Largest eigenvalue of l; 0 for an edgeless graph.
  double lambda_max = 0.0;
};

/// Eigenvalues ascending; eigenvector i is column i.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;
};

/// Coefficients theta_0..theta_K of a Chebyshev filter of order K.
struct ChebCoeffs {
  std::vector<double> theta;

  int order() const { return static_cast<int>(theta.size()) - 1; }
};

enum class LambdaMaxMethod {
  exact,           // largest Jacobi eigenvalue
  power_iteration,
  upper_bound,     // 2, the bound of the normalized spectrum
};

/// L = I - D^{-1/2} A D^{-1/2}. Isolated nodes get a zero D^{-1/2} entry,
/// so their diagonal entry is 1.
Laplacian normalized_laplacian(const Adjacency& a,
                               LambdaMaxMethod method = LambdaMaxMethod::exact);

/// Cyclic Jacobi eigensolver for a dense symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// 1e-12 * ||m||_F; throws NumericError with the remaining off-diagonal
/// norm if that takes more than 100 sweeps.
SpectralDecomposition symmetric_eig(const Matrix& m);

/// Largest eigenvalue by power iteration on m + 2I. Returns 0 for the zero
/// matrix. Converges to relative tolerance `tol` or gives up after 10000
/// iterations with NumericError.
double estimate_lambda_max(const Matrix& m, double tol = 1e-6);

/// (2 / lambda_max) L - I. Throws ValidationError when lambda_max <= 0.
Matrix rescale_laplacian(const Laplacian& l);

/// lambda_max to use for rescaling: the stored value, or 2 for an edgeless
/// graph so the rescaled operator L - I keeps its spectrum in [-1, 1].
double safe_lambda_max(const Laplacian& l);

/// y = sum_k theta_k T_k(l_scaled) c by the three-term recursion.
Vector chebyshev_filter(const Matrix& l_scaled, const Vector& c,
                        const ChebCoeffs& coeffs);

/// T_0(l_scaled) x, ..., T_K(l_scaled) x for every column of x at once.
std::vector<Matrix> chebyshev_basis(const Matrix& l_scaled, const Matrix& x,
                                    int order);

/// sum_k T_k(l_scaled) g_k, evaluated with Clenshaw's recurrence. Since each
/// T_k(l_scaled) is symmetric this is also the adjoint of chebyshev_basis.
Matrix chebyshev_combine(const Matrix& l_scaled, std::span<const Matrix> g);

/// Dense spectral evaluation U g(Lambda) U^T c with
/// g(lambda) = sum_k theta_k T_k(2 lambda / lambda_max - 1). Test oracle
/// for chebyshev_filter.
Vector spectral_filter_oracle(const SpectralDecomposition& decomp, const Vector& c,
                              const ChebCoeffs& coeffs, double lambda_max);

/// Scalar T_k(x) for k = 0..order, summed against theta.
double chebyshev_series(std::span<const double> theta, double x);

/// Graph Fourier transform U^T c and its inverse U c_hat.
Vector graph_fourier(const SpectralDecomposition& decomp, const Vector& c);
Vector inverse_graph_fourier(const SpectralDecomposition& decomp, const Vector& c_hat);

}  // namespace siamgcn
