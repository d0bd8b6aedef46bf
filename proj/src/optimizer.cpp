#include "dfrot/optimizer.hpp"

#include "dfrot/error.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace dfrot {

namespace {
constexpr double kFactorTolerance = 1e-12;
}  // namespace

const char* to_string(InitKind kind) {
  switch (kind) {
    case InitKind::hadamard_randomized: return "rh";
    case InitKind::orthogonal_random: return "ro";
    case InitKind::from_file: return "file";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::usage, "iterations must be >= 1");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::usage, "gamma must be >= 0");
  if (init == InitKind::from_file && !initial) {
    throw Error(ErrorCode::usage, "init from file requires an initial rotation");
  }
  quant.validate();
}

LossTerms combine_losses(const std::vector<double>& per_token, const MassiveMask& mask, double gamma) {
  if (mask.tokens() != per_token.size()) {
    throw Error(ErrorCode::dimension_mismatch, "mask length does not match token count");
  }
  double bulk = 0.0, massive = 0.0;
  std::size_t n_bulk = 0, n_massive = 0;
  for (std::size_t t = 0; t < per_token.size(); ++t) {
    if (mask.flags[t]) {
      massive += per_token[t];
      ++n_massive;
    } else {
      bulk += per_token[t];
      ++n_bulk;
    }
  }
  LossTerms terms;
  terms.bulk = n_bulk > 0 ? bulk / static_cast<double>(n_bulk) : 0.0;
  terms.massive = n_massive > 0 ? massive / static_cast<double>(n_massive) : 0.0;
  if (std::isinf(gamma)) {
    terms.weighted = terms.massive;
  } else if (n_massive == 0) {
    terms.weighted = terms.bulk;
  } else {
    terms.weighted = terms.bulk + gamma * terms.massive;
  }
  return terms;
}

double weighted_loss(const Matrix& x, const RotationMatrix& r, const MassiveMask& mask, double gamma,
                     const QuantConfig& cfg) {
  if (r.dim() != x.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "rotation dim does not match token width");
  }
  return combine_losses(per_token_sq_error(x * r.matrix(), cfg), mask, gamma).weighted;
}

std::vector<double> token_weights(const MassiveMask& mask, double gamma) {
  const std::size_t n_massive = mask.count();
  const std::size_t n_bulk = mask.tokens() - n_massive;
  const double bulk_w = std::isinf(gamma) || n_bulk == 0 ? 0.0 : 1.0 / static_cast<double>(n_bulk);
  double massive_w = 0.0;
  if (n_massive > 0) {
    massive_w = (std::isinf(gamma) ? 1.0 : gamma) / static_cast<double>(n_massive);
  }
  std::vector<double> w(mask.tokens());
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = mask.flags[t] ? massive_w : bulk_w;
  return w;
}

QuantizedTokens centroid_step(const Matrix& x, const RotationMatrix& r, const QuantConfig& cfg) {
  if (r.dim() != x.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "rotation dim does not match token width");
  }
  return quantize_per_token(x * r.matrix(), cfg);
}

ProcrustesResult procrustes_step(const Matrix& x, const Matrix& eta, const std::vector<double>& weights,
                                 bool enforce_det_plus_one) {
  if (x.rows() != eta.rows() || x.cols() != eta.cols() ||
      static_cast<std::size_t>(x.rows()) != weights.size()) {
    throw Error(ErrorCode::dimension_mismatch, "procrustes inputs have inconsistent shapes");
  }
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::usage, "procrustes weights must be finite and non-negative");
    }
  }
  if (!x.allFinite() || !eta.allFinite()) {
    throw Error(ErrorCode::numerical, "procrustes inputs are not finite");
  }

  const Eigen::Index dim = x.cols();
  Matrix weighted = x;
  for (Eigen::Index t = 0; t < x.rows(); ++t) weighted.row(t) *= weights[static_cast<std::size_t>(t)];
  const Eigen::MatrixXd cross = weighted.transpose() * eta;  // X^T diag(w) eta

  // Divide-and-conquer for the usual full-rank case. Fewer weighted tokens than
  // channels means a rank-deficient cross term, where BDCSVD can break down
  // (lost orthogonality, or worse); Jacobi handles those.
  Eigen::Index active = 0;
  for (double w : weights) active += w > 0.0;
  Eigen::MatrixXd u, v;
  Eigen::VectorXd sigma;
  if (active >= dim) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() == Eigen::Success) {
      u = svd.matrixU();
      v = svd.matrixV();
      sigma = svd.singularValues();
    }
  }
  if (u.size() == 0 || orthogonality_error(u) > kFactorTolerance || orthogonality_error(v) > kFactorTolerance) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.info() != Eigen::Success) {
      throw Error(ErrorCode::numerical, "SVD of the cross-covariance failed");
    }
    u = svd.matrixU();
    v = svd.matrixV();
    sigma = svd.singularValues();
  }

  // Sign-normalize singular pairs: the largest-magnitude entry of each U column is positive.
  for (Eigen::Index k = 0; k < dim; ++k) {
    Eigen::Index arg = 0;
    u.col(k).cwiseAbs().maxCoeff(&arg);
    if (u(arg, k) < 0.0) {
      u.col(k) = -u.col(k);
      v.col(k) = -v.col(k);
    }
  }

  ProcrustesResult result{RotationMatrix::identity(dim)};
  const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  result.non_unique = sigma_max == 0.0 || sigma(dim - 1) < 1e-12 * sigma_max;

  Matrix r = u * v.transpose();
  if (enforce_det_plus_one && determinant_sign(r) < 0) {
    // Singular values are sorted descending; flip the pair with the smallest one.
    v.col(dim - 1) = -v.col(dim - 1);
    r = u * v.transpose();
    result.det_corrected = true;
  }
  if (!r.allFinite()) {
    throw Error(ErrorCode::numerical, "procrustes produced non-finite rotation");
  }
  result.rotation = RotationMatrix(std::move(r), RotationKind::optimized);
  return result;
}

RotationMatrix initial_rotation(Eigen::Index dim, const OptimizerConfig& cfg) {
  RotationMatrix r = [&] {
    switch (cfg.init) {
      case InitKind::hadamard_randomized:
        return hadamard_randomized(dim, cfg.seed);
      case InitKind::orthogonal_random:
        return orthogonal_random(dim, cfg.seed);
      case InitKind::from_file:
        break;
    }
    if (!cfg.initial) throw Error(ErrorCode::usage, "missing initial rotation");
    if (cfg.initial->dim() != dim) {
      throw Error(ErrorCode::dimension_mismatch,
                  "initial rotation dim " + std::to_string(cfg.initial->dim()) + " != token width " +
                      std::to_string(dim));
    }
    return *cfg.initial;
  }();
  // The rotation step searches SO(C) in this mode, so the start point must lie in it too.
  return cfg.enforce_det_plus_one ? enforce_rotation(r) : r;
}

namespace {

std::vector<double> row_sq_norms(const Matrix& diff) {
  std::vector<double> out(static_cast<std::size_t>(diff.rows()));
  for (Eigen::Index t = 0; t < diff.rows(); ++t) out[static_cast<std::size_t>(t)] = diff.row(t).squaredNorm();
  return out;
}

}  // namespace

OptimizeResult optimize(const Matrix& x, const MassiveMask& mask, const OptimizerConfig& cfg) {
  cfg.validate();
  if (mask.tokens() != static_cast<std::size_t>(x.rows())) {
    throw Error(ErrorCode::dimension_mismatch, "mask length does not match token count");
  }
  if (!x.allFinite()) {
    throw Error(ErrorCode::invalid_data, "calibration tokens contain NaN or Inf");
  }

  const std::vector<double> weights = token_weights(mask, cfg.gamma);
  RotationMatrix current = initial_rotation(x.cols(), cfg);
  RotationMatrix best = current;

  OptimizerTrace trace;
  trace.per_iteration.reserve(static_cast<std::size_t>(cfg.iterations));
  bool have_best = false;

  auto consider = [&](const LossTerms& terms, int iter, const RotationMatrix& r) {
    if (!have_best || terms.weighted < trace.best_loss.weighted) {
      have_best = true;
      trace.best_loss = terms;
      trace.best_iteration = iter;
      best = r;
    }
  };

  int flat_rounds = 0;
  double previous = 0.0;
  Matrix y = x * current.matrix();
  for (int k = 0; k < cfg.iterations; ++k) {
    const Matrix eta = dequantize(quantize_per_token(y, cfg.quant));
    const LossTerms before = combine_losses(row_sq_norms(y - eta), mask, cfg.gamma);
    consider(before, k, current);

    IterationRecord record;
    record.iter = k;
    record.weighted_loss_before_rotation_step = before.weighted;
    record.bulk_loss = before.bulk;
    record.massive_loss = before.massive;

    // A zero loss is already a global minimum; a rotation step would only add roundoff.
    if (before.weighted == 0.0) {
      trace.per_iteration.push_back(record);
      if (cfg.early_stop && ++flat_rounds >= 10) break;
      continue;
    }

    ProcrustesResult step = procrustes_step(x, eta, weights, cfg.enforce_det_plus_one);
    y = x * step.rotation.matrix();

    record.weighted_loss_after_rotation_step = combine_losses(row_sq_norms(y - eta), mask, cfg.gamma).weighted;
    record.non_unique = step.non_unique;
    trace.per_iteration.push_back(record);

    current = std::move(step.rotation);

    if (cfg.early_stop) {
      const double scale = std::max(std::abs(previous), std::numeric_limits<double>::min());
      flat_rounds = (k > 0 && std::abs(before.weighted - previous) / scale < 1e-8) ? flat_rounds + 1 : 0;
      previous = before.weighted;
      if (flat_rounds >= 10) break;
    }
  }

  trace.final_loss = combine_losses(per_token_sq_error(y, cfg.quant), mask, cfg.gamma);
  consider(trace.final_loss, static_cast<int>(trace.per_iteration.size()), current);
  trace.final_R = current;
  return OptimizeResult{std::move(best), std::move(trace)};
}

}  // namespace dfrot
