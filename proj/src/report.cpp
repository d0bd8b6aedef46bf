#include "dfrot/report.hpp"

#include "dfrot/error.hpp"
#include "dfrot/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace dfrot::report {

namespace {

std::string fixed(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json to_json(const ErrorReport& r) {
  return {{"mean_sq_error", r.mean_sq_error},
          {"massive_mean_sq_error", r.massive_mean_sq_error},
          {"bulk_mean_sq_error", r.bulk_mean_sq_error},
          {"per_token", r.per_token_sq_error}};
}

std::string to_csv(const ErrorReport& r) {
  std::string out = "token_index,is_massive,sq_error\n";
  for (std::size_t t = 0; t < r.per_token_sq_error.size(); ++t) {
    const bool massive = t < r.is_massive.size() && r.is_massive[t];
    out += std::to_string(t) + "," + (massive ? "1" : "0") + "," + sci(r.per_token_sq_error[t]) + "\n";
  }
  return out;
}

nlohmann::json to_json(const MassiveMask& m) {
  nlohmann::json j = {{"tokens", m.tokens()},
                      {"flagged", m.indices()},
                      {"fraction", m.fraction()},
                      {"median_linf", m.median_linf}};
  j["tau_rel"] = m.tau_rel > 0.0 ? nlohmann::json(m.tau_rel) : nlohmann::json(nullptr);
  j["tau_abs"] = m.tau_abs ? nlohmann::json(*m.tau_abs) : nlohmann::json(nullptr);
  return j;
}

MassiveMask mask_from_json(const nlohmann::json& j) {
  try {
    MassiveMask m = MassiveMask::from_indices(j.at("tokens").get<std::size_t>(),
                                              j.at("flagged").get<std::vector<std::size_t>>());
    if (j.contains("tau_rel") && j["tau_rel"].is_number()) m.tau_rel = j["tau_rel"].get<double>();
    if (j.contains("tau_abs") && j["tau_abs"].is_number()) m.tau_abs = j["tau_abs"].get<double>();
    if (j.contains("median_linf") && j["median_linf"].is_number()) {
      m.median_linf = j["median_linf"].get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_data, std::string("mask JSON: ") + e.what());
  }
}

MassiveMask read_mask(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return mask_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_data, path.string() + ": " + e.what());
  }
}

nlohmann::json gamma_json(double gamma) {
  return std::isinf(gamma) ? nlohmann::json("inf") : nlohmann::json(gamma);
}

std::string trace_jsonl(const OptimizerTrace& trace) {
  std::string out;
  for (const auto& rec : trace.per_iteration) {
    const nlohmann::json j = {{"iter", rec.iter},
                              {"weighted_loss_before_rotation_step", rec.weighted_loss_before_rotation_step},
                              {"weighted_loss_after_rotation_step", rec.weighted_loss_after_rotation_step},
                              {"bulk_loss", rec.bulk_loss},
                              {"massive_loss", rec.massive_loss},
                              {"non_unique", rec.non_unique}};
    out += j.dump() + "\n";
  }
  return out;
}

std::string trace_csv(const OptimizerTrace& trace) {
  std::string out =
      "iter,weighted_loss_before_rotation_step,weighted_loss_after_rotation_step,bulk_loss,massive_loss\n";
  for (const auto& rec : trace.per_iteration) {
    out += std::to_string(rec.iter) + "," + sci(rec.weighted_loss_before_rotation_step) + "," +
           sci(rec.weighted_loss_after_rotation_step) + "," + sci(rec.bulk_loss) + "," + sci(rec.massive_loss) + "\n";
  }
  return out;
}

std::string scatter_svg(const ErrorReport& r, const MassiveMask* mask) {
  const std::size_t n = r.per_token_sq_error.size();
  if (mask != nullptr && mask->tokens() != n) {
    throw Error(ErrorCode::dimension_mismatch, "mask length does not match report length");
  }
  constexpr double width = 800, height = 400;
  constexpr double left = 70, right = 20, top = 20, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  // Zero errors sit one decade below the smallest positive value.
  double min_pos = std::numeric_limits<double>::infinity();
  double max_val = 0.0;
  for (double e : r.per_token_sq_error) {
    if (e > 0.0) min_pos = std::min(min_pos, e);
    max_val = std::max(max_val, e);
  }
  if (!std::isfinite(min_pos)) min_pos = max_val = 1.0;
  const double floor_val = min_pos / 10.0;
  double lo = std::floor(std::log10(floor_val));
  double hi = std::ceil(std::log10(std::max(max_val, floor_val)));
  if (hi <= lo) hi = lo + 1.0;

  auto x_of = [&](std::size_t i) {
    return left + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : plot_w / 2.0);
  };
  auto y_of = [&](double e) {
    const double v = std::log10(std::max(e, floor_val));
    return top + plot_h * (hi - v) / (hi - lo);
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
      << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(width, 0) << " " << fixed(height, 0) << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top + plot_h) << "\" x2=\"" << fixed(left + plot_w)
      << "\" y2=\"" << fixed(top + plot_h) << "\"/>\n"
      << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(left) << "\" y2=\""
      << fixed(top + plot_h) << "\"/>\n"
      << "</g>\n"
      << "<g id=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double d = lo; d <= hi + 0.5; d += 1.0) {
    const double y = top + plot_h * (hi - d) / (hi - lo);
    svg << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">1e"
        << static_cast<int>(d) << "</text>\n";
  }
  const std::size_t last = n > 0 ? n - 1 : 0;
  svg << "<text x=\"" << fixed(left) << "\" y=\"" << fixed(top + plot_h + 16) << "\" text-anchor=\"middle\">0</text>\n"
      << "<text x=\"" << fixed(left + plot_w) << "\" y=\"" << fixed(top + plot_h + 16)
      << "\" text-anchor=\"middle\">" << last << "</text>\n"
      << "<text x=\"" << fixed(left + plot_w / 2) << "\" y=\"" << fixed(height - 10)
      << "\" text-anchor=\"middle\">token index</text>\n"
      << "<text x=\"16\" y=\"" << fixed(top + plot_h / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << fixed(top + plot_h / 2) << ")\">squared quantization error</text>\n"
      << "</g>\n";

  // Bulk tokens first so the massive marks stay on top.
  svg << "<g id=\"bulk\" fill=\"#1f77b4\" fill-opacity=\"0.6\">\n";
  for (std::size_t i = 0; i < n; ++i) {
    if (mask != nullptr && mask->flags[i]) continue;
    svg << "<circle class=\"mark\" data-token=\"" << i << "\" cx=\"" << fixed(x_of(i)) << "\" cy=\""
        << fixed(y_of(r.per_token_sq_error[i])) << "\" r=\"1.5\"/>\n";
  }
  svg << "</g>\n<g id=\"massive\" fill=\"#d62728\" stroke=\"black\" stroke-width=\"0.5\">\n";
  for (std::size_t i = 0; mask != nullptr && i < n; ++i) {
    if (!mask->flags[i]) continue;
    svg << "<circle class=\"mark massive\" data-token=\"" << i << "\" cx=\"" << fixed(x_of(i)) << "\" cy=\""
        << fixed(y_of(r.per_token_sq_error[i])) << "\" r=\"4\"/>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

void emit_scatter_svg(const ErrorReport& r, const MassiveMask* mask, const std::filesystem::path& path) {
  io::write_text(path, scatter_svg(r, mask));
}

}  // namespace dfrot::report
