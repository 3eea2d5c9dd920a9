#include "graphcorr/linalg.hpp"

#include <cmath>
#include <string>

#include "graphcorr/error.hpp"

namespace graphcorr {

Eigen::LLT<Matrix> spd_factor(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  Matrix jittered = a;
  jittered.diagonal().array() += 1e-10;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::Numeric, std::string("Cholesky factorization failed: ") + what +
                                 " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double min_eigenvalue(const Matrix& symmetric) {
  Matrix s = 0.5 * (symmetric + symmetric.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double x_minus_log1p(double x) {
  if (std::abs(x) < 1e-4) {
    // x^2/2 - x^3/3 + x^4/4 - x^5/5
    return x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * 0.2)));
  }
  return x - std::log1p(x);
}

}  // namespace graphcorr
