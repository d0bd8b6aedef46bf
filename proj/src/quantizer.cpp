#include "dfrot/quantizer.hpp"

#include "dfrot/error.hpp"
#include "dfrot/massive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dfrot {

void QuantConfig::validate() const {
  if (bits < 2 || bits > 8) {
    throw Error(ErrorCode::usage, "bits must be in [2, 8], got " + std::to_string(bits));
  }
  if (!(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= 1.0)) {
    throw Error(ErrorCode::usage, "clip ratios alpha and beta must lie in (0, 1]");
  }
}

double round_half_away(double v) { return std::round(v); }

QuantizedTokens quantize_per_token(const Matrix& x, const QuantConfig& cfg) {
  cfg.validate();
  if (x.rows() < 1 || x.cols() < 1) {
    throw Error(ErrorCode::invalid_data, "token matrix must be non-empty");
  }
  if (!x.allFinite()) {
    throw Error(ErrorCode::invalid_data, "token matrix contains NaN or Inf");
  }

  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  const double max_code = static_cast<double>(cfg.max_code());

  QuantizedTokens q;
  q.config = cfg;
  q.codes = CodeMatrix::Zero(rows, cols);
  q.scales.assign(static_cast<std::size_t>(rows), 0.0);
  q.zero_points.assign(static_cast<std::size_t>(rows), 0);
  q.constants.assign(static_cast<std::size_t>(rows), 0.0);

  for (Eigen::Index t = 0; t < rows; ++t) {
    const auto row = x.row(t);
    const double hi = cfg.alpha * row.maxCoeff();
    const double lo = cfg.beta * row.minCoeff();
    const double range = hi - lo;
    const auto ti = static_cast<std::size_t>(t);
    if (!(range > 0.0)) {
      // An inverted window (alpha*max < beta*min) is only reachable with
      // alpha != beta; it collapses to the window midpoint.
      q.constants[ti] = range == 0.0 ? hi : 0.5 * (hi + lo);
      continue;
    }
    const double scale = range / max_code;
    const double zero = -round_half_away(lo / scale);
    q.scales[ti] = scale;
    q.zero_points[ti] = static_cast<std::int64_t>(zero);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double code = std::clamp(round_half_away(row(c) / scale) + zero, 0.0, max_code);
      q.codes(t, c) = static_cast<std::uint8_t>(code);
    }
  }
  return q;
}

Matrix dequantize(const QuantizedTokens& q) {
  Matrix out(q.codes.rows(), q.codes.cols());
  for (Eigen::Index t = 0; t < q.codes.rows(); ++t) {
    const auto ti = static_cast<std::size_t>(t);
    if (q.scales[ti] == 0.0) {
      out.row(t).setConstant(q.constants[ti]);
      continue;
    }
    const double z = static_cast<double>(q.zero_points[ti]);
    for (Eigen::Index c = 0; c < q.codes.cols(); ++c) {
      out(t, c) = (static_cast<double>(q.codes(t, c)) - z) * q.scales[ti];
    }
  }
  return out;
}

std::vector<double> per_token_sq_error(const Matrix& y, const QuantConfig& cfg) {
  const Matrix eta = dequantize(quantize_per_token(y, cfg));
  std::vector<double> err(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    err[static_cast<std::size_t>(t)] = (y.row(t) - eta.row(t)).squaredNorm();
  }
  return err;
}

ErrorReport quant_error(const Matrix& x, const RotationMatrix* rotation, const QuantConfig& cfg,
                        const MassiveMask* mask) {
  if (rotation != nullptr && rotation->dim() != x.cols()) {
    throw Error(ErrorCode::dimension_mismatch,
                "rotation dim " + std::to_string(rotation->dim()) + " != token width " +
                    std::to_string(x.cols()));
  }
  if (mask != nullptr && mask->tokens() != static_cast<std::size_t>(x.rows())) {
    throw Error(ErrorCode::dimension_mismatch, "mask length does not match token count");
  }

  ErrorReport report;
  report.per_token_sq_error =
      rotation != nullptr ? per_token_sq_error(x * rotation->matrix(), cfg) : per_token_sq_error(x, cfg);
  report.is_massive = mask != nullptr ? mask->flags
                                      : std::vector<bool>(report.per_token_sq_error.size(), false);

  double total = 0.0, massive = 0.0, bulk = 0.0;
  std::size_t n_massive = 0, n_bulk = 0;
  for (std::size_t t = 0; t < report.per_token_sq_error.size(); ++t) {
    const double e = report.per_token_sq_error[t];
    total += e;
    if (report.is_massive[t]) {
      massive += e;
      ++n_massive;
    } else {
      bulk += e;
      ++n_bulk;
    }
  }
  report.mean_sq_error = total / static_cast<double>(report.per_token_sq_error.size());
  report.massive_mean_sq_error = n_massive > 0 ? massive / static_cast<double>(n_massive) : 0.0;
  report.bulk_mean_sq_error = n_bulk > 0 ? bulk / static_cast<double>(n_bulk) : 0.0;
  return report;
}

Matrix rtn_weight_quantize(const Matrix& w, int bits) {
  if (bits < 2 || bits > 16) {
    throw Error(ErrorCode::usage, "weight bits must be in [2, 16]");
  }
  if (!w.allFinite()) {
    throw Error(ErrorCode::invalid_data, "weight matrix contains NaN or Inf");
  }
  const double levels = static_cast<double>((std::int64_t{1} << (bits - 1)) - 1);
  Matrix out = Matrix::Zero(w.rows(), w.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const double amax = w.row(r).cwiseAbs().maxCoeff();
    if (amax == 0.0) continue;
    const double scale = amax / levels;
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      out(r, c) = round_half_away(w(r, c) / scale) * scale;
    }
  }
  return out;
}

}  // namespace dfrot
