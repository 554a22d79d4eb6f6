#include "siamgcn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "siamgcn/random.hpp"

namespace siamgcn {

namespace {

constexpr int kJacobiSweepCap = 100;
constexpr double kJacobiRelTol = 1e-12;
constexpr int kPowerIterationCap = 10000;

double off_diagonal_norm(const Matrix& a) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (i != j) sum += a(i, j) * a(i, j);
    }
  }
  return std::sqrt(sum);
}

// Zeroes a(p, q) with a rotation in the (p, q) plane, applied as
// a <- J^T a J and v <- v J.
void jacobi_rotate(Matrix& a, Matrix& v, Eigen::Index p, Eigen::Index q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

void Adjacency::validate() const {
  if (w.rows() < 1 || w.rows() != w.cols()) {
    throw ValidationError("adjacency must be a non-empty square matrix");
  }
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (w(i, i) != 0.0) {
      throw ValidationError("adjacency diagonal must be zero (node " + std::to_string(i) + ")");
    }
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!std::isfinite(w(i, j)) || w(i, j) < 0.0) {
        throw ValidationError("adjacency weights must be finite and non-negative");
      }
      if (w(i, j) != w(j, i)) {
        throw ValidationError("adjacency must be symmetric");
      }
    }
  }
}

Laplacian normalized_laplacian(const Adjacency& a, LambdaMaxMethod method) {
  a.validate();
  const Eigen::Index n = a.size();
  Vector inv_sqrt_degree = a.w.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = inv_sqrt_degree(i);
    inv_sqrt_degree(i) = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }

  Laplacian out;
  out.l = Matrix::Identity(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out.l(i, j) -= inv_sqrt_degree(i) * a.w(i, j) * inv_sqrt_degree(j);
    }
  }

  const bool edgeless = (a.w.array() == 0.0).all();
  if (edgeless) {
    out.lambda_max = 0.0;
    return out;
  }
  switch (method) {
    case LambdaMaxMethod::exact:
      out.lambda_max = symmetric_eig(out.l).eigenvalues(n - 1);
      break;
    case LambdaMaxMethod::power_iteration:
      out.lambda_max = estimate_lambda_max(out.l);
      break;
    case LambdaMaxMethod::upper_bound:
      out.lambda_max = 2.0;
      break;
  }
  return out;
}

SpectralDecomposition symmetric_eig(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("symmetric_eig: matrix must be square");
  const Eigen::Index n = m.rows();
  const double scale = m.norm();
  if ((m - m.transpose()).norm() > 1e-9 * std::max(scale, 1.0)) {
    throw ValidationError("symmetric_eig: matrix is not symmetric");
  }

  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double threshold = kJacobiRelTol * scale;

  int sweep = 0;
  double off = off_diagonal_norm(a);
  while (off > threshold) {
    if (sweep == kJacobiSweepCap) {
      std::ostringstream msg;
      msg << "symmetric_eig: no convergence after " << kJacobiSweepCap
          << " sweeps, off-diagonal norm " << off << " (threshold " << threshold << ")";
      throw NumericError(msg.str());
    }
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) jacobi_rotate(a, v, p, q);
    }
    ++sweep;
    off = off_diagonal_norm(a);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

  SpectralDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = a(src, src);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    v.col(src).cwiseAbs().maxCoeff(&arg);
    const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
    out.eigenvectors.col(k) = sign * v.col(src);
  }
  return out;
}

double estimate_lambda_max(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) throw ValidationError("estimate_lambda_max: matrix must be square");
  const Eigen::Index n = m.rows();
  if (n == 0 || (m.array() == 0.0).all()) return 0.0;

  constexpr double kShift = 2.0;
  Rng rng(0x9e3779b97f4a7c15ULL);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + rng.normal();
  v.normalize();

  double estimate = 0.0;
  for (int it = 0; it < kPowerIterationCap; ++it) {
    Vector w = m * v + kShift * v;
    const double mu = v.dot(w);
    estimate = mu - kShift;
    const double residual = (w - mu * v).norm();
    if (residual <= tol * std::max(std::abs(estimate), 1e-300)) return estimate;
    const double norm = w.norm();
    if (norm == 0.0) break;
    v = w / norm;
  }
  std::ostringstream msg;
  msg << "estimate_lambda_max: no convergence after " << kPowerIterationCap
      << " iterations (last estimate " << estimate << ")";
  throw NumericError(msg.str());
}

double safe_lambda_max(const Laplacian& l) { return l.lambda_max > 0.0 ? l.lambda_max : 2.0; }

Matrix rescale_laplacian(const Laplacian& l) {
  if (!(l.lambda_max > 0.0)) {
    throw ValidationError("rescale_laplacian: lambda_max must be positive (degenerate graph)");
  }
  const Eigen::Index n = l.l.rows();
  return (2.0 / l.lambda_max) * l.l - Matrix::Identity(n, n);
}

Vector chebyshev_filter(const Matrix& l_scaled, const Vector& c, const ChebCoeffs& coeffs) {
  if (l_scaled.rows() != l_scaled.cols() || l_scaled.rows() != c.size()) {
    throw ValidationError("chebyshev_filter: dimension mismatch");
  }
  if (coeffs.theta.empty()) throw ValidationError("chebyshev_filter: empty coefficient vector");

  const int order = coeffs.order();
  Vector y = coeffs.theta[0] * c;
  if (order == 0) return y;

  Vector t_prev = c;
  Vector t_cur = l_scaled * c;
  y += coeffs.theta[1] * t_cur;
  for (int k = 2; k <= order; ++k) {
    Vector t_next = 2.0 * (l_scaled * t_cur) - t_prev;
    y += coeffs.theta[static_cast<std::size_t>(k)] * t_next;
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  return y;
}

std::vector<Matrix> chebyshev_basis(const Matrix& l_scaled, const Matrix& x, int order) {
  if (l_scaled.rows() != l_scaled.cols() || l_scaled.cols() != x.rows()) {
    throw ValidationError("chebyshev_basis: dimension mismatch");
  }
  std::vector<Matrix> basis;
  basis.reserve(static_cast<std::size_t>(order) + 1);
  basis.push_back(x);
  if (order >= 1) basis.push_back(l_scaled * x);
  for (int k = 2; k <= order; ++k) {
    const auto& t1 = basis[static_cast<std::size_t>(k - 1)];
    const auto& t2 = basis[static_cast<std::size_t>(k - 2)];
    Matrix next = 2.0 * (l_scaled * t1) - t2;
    basis.push_back(std::move(next));
  }
  return basis;
}

Matrix chebyshev_combine(const Matrix& l_scaled, std::span<const Matrix> g) {
  if (g.empty()) throw ValidationError("chebyshev_combine: no terms");
  const std::size_t order = g.size() - 1;
  if (order == 0) return g[0];

  Matrix b1 = Matrix::Zero(g[0].rows(), g[0].cols());  // b_{k+1}
  Matrix b2 = b1;                                       // b_{k+2}
  for (std::size_t k = order; k >= 1; --k) {
    Matrix bk = g[k] + 2.0 * (l_scaled * b1) - b2;
    b2 = std::move(b1);
    b1 = std::move(bk);
  }
  return g[0] + l_scaled * b1 - b2;
}

double chebyshev_series(std::span<const double> theta, double x) {
  if (theta.empty()) return 0.0;
  double t_prev = 1.0;
  double t_cur = x;
  double sum = theta[0];
  if (theta.size() > 1) sum += theta[1] * x;
  for (std::size_t k = 2; k < theta.size(); ++k) {
    const double t_next = 2.0 * x * t_cur - t_prev;
    sum += theta[k] * t_next;
    t_prev = t_cur;
    t_cur = t_next;
  }
  return sum;
}

Vector spectral_filter_oracle(const SpectralDecomposition& decomp, const Vector& c,
                              const ChebCoeffs& coeffs, double lambda_max) {
  const Vector c_hat = graph_fourier(decomp, c);
  Vector filtered(c_hat.size());
  for (Eigen::Index i = 0; i < c_hat.size(); ++i) {
    const double x = 2.0 * decomp.eigenvalues(i) / lambda_max - 1.0;
    filtered(i) = chebyshev_series(coeffs.theta, x) * c_hat(i);
  }
  return inverse_graph_fourier(decomp, filtered);
}

Vector graph_fourier(const SpectralDecomposition& decomp, const Vector& c) {
  return decomp.eigenvectors.transpose() * c;
}

Vector inverse_graph_fourier(const SpectralDecomposition& decomp, const Vector& c_hat) {
  return decomp.eigenvectors * c_hat;
}

}  // namespace siamgcn
