#pragma once

#include <Eigen/Dense>

namespace graphcorr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Cholesky factor of a symmetric positive-definite matrix. A failed
// factorization is retried once with 1e-10 added to the diagonal; a second
// failure throws Error(Numeric) with `what` in the message.
Eigen::LLT<Matrix> spd_factor(const Matrix& a, const char* what);

double log_det(const Eigen::LLT<Matrix>& llt);

double min_eigenvalue(const Matrix& symmetric);

// x - log1p(x), accurate for small |x|.
double x_minus_log1p(double x);

}  // namespace graphcorr
