#include "graphcorr/reports.hpp"

#include <charconv>
#include <cmath>

#include "graphcorr/error.hpp"
#include "graphcorr/textio.hpp"
#include "json.hpp"

namespace graphcorr {

namespace {

using nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

double to_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    fail(ErrorKind::InvalidArgument, "invalid number '" + std::string(s) + "' in " + std::string(what));
  }
  return v;
}

ordered_json number(double v) {
  return std::isfinite(v) ? ordered_json(std::stod(format_number(v))) : ordered_json();
}

ordered_json matrix_rows(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

VarianceAssignment parse_variance_list(std::string_view text) {
  VarianceAssignment out;
  if (trim(text).empty()) return out;
  for (auto item : split(text, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::InvalidArgument, "variance entry '" + std::string(item) + "' must be name=value");
    }
    const std::string name(trim(item.substr(0, eq)));
    if (name.empty()) fail(ErrorKind::InvalidArgument, "variance entry '" + std::string(item) + "' has no name");
    const double v = to_number(trim(item.substr(eq + 1)), "variance list");
    if (!out.emplace(name, v).second) fail(ErrorKind::InvalidArgument, "variance for '" + name + "' given twice");
  }
  return out;
}

VarianceAssignment parse_variance_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::exception& e) {
    fail(ErrorKind::Parse, std::string("variance JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "variance JSON must be an object of name: value");
  VarianceAssignment out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) fail(ErrorKind::InvalidArgument, "variance for '" + k + "' must be a number");
    out.emplace(k, v.get<double>());
  }
  return out;
}

VarianceAssignment merge_variances(const VarianceAssignment& inline_values, const VarianceAssignment& file_values) {
  VarianceAssignment out = file_values;
  for (const auto& [name, v] : inline_values) {
    auto it = out.find(name);
    if (it != out.end() && it->second != v) {
      fail(ErrorKind::InvalidArgument, "variance for '" + name + "' differs between the inline list (" +
                                           format_number(v) + ") and the file (" + format_number(it->second) + ")");
    }
    out[name] = v;
  }
  return out;
}

std::vector<std::string> parse_name_list(std::string_view text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  for (auto item : split(text, ',')) {
    if (item.empty()) fail(ErrorKind::InvalidArgument, "empty name in list '" + std::string(text) + "'");
    out.emplace_back(item);
  }
  return out;
}

std::string matrix_csv(const std::vector<std::string>& names, const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? "," : "") + format_number(m(i, j));
    out += "\n";
  }
  return out;
}

std::string matrix_json(const std::vector<std::string>& names, const Matrix& m) {
  ordered_json j;
  j["order"] = names;
  j["matrix"] = matrix_rows(m);
  return j.dump(2) + "\n";
}

std::string validation_report(std::string_view text, std::size_t* count) {
  const auto violations = validate(parse_declarations(text));
  if (count) *count = violations.size();
  std::string out;
  for (const auto& v : violations) out += v.code + ": " + v.message + "\n";
  return out;
}

std::string sequence_json(const TreeGraph& graph, const ModelSequence& seq,
                          const std::optional<std::vector<double>>& q2) {
  std::optional<VarianceAssignment> named;
  if (q2) named = named_variances(graph, *q2);
  ordered_json steps = ordered_json::array();
  for (std::size_t k = 0; k < seq.size(); ++k) {
    ordered_json s;
    s["index"] = k;
    s["removed_next"] = k < seq.removal_order.size() ? ordered_json(seq.removal_order[k]) : ordered_json();
    if (seq.is_identity(k)) {
      s["latents"] = ordered_json::array();
      s["graph"] = ordered_json();
    } else {
      s["latents"] = seq.graphs[k].latent_names();
      s["graph"] = serialize(seq.graphs[k]);
    }
    if (named) {
      const auto k_children = static_cast<Eigen::Index>(seq.children.size());
      Matrix c = Matrix::Identity(k_children, k_children);
      if (!seq.is_identity(k)) {
        VarianceAssignment sub;
        for (const auto& l : seq.graphs[k].latent_names()) sub.emplace(l, named->at(l));
        c = correlation(seq.graphs[k], aligned_variances(seq.graphs[k], sub), CorrelationMethod::PathRule);
      }
      s["correlation"] = matrix_rows(c);
    }
    steps.push_back(s);
  }
  ordered_json j;
  j["children"] = seq.children;
  j["removal_order"] = seq.removal_order;
  j["models"] = steps;
  return j.dump(2) + "\n";
}

std::string joint_prior_json(const JointPrior& prior, double lambda, DensityMode mode, Parametrization param) {
  ordered_json j;
  j["lambda"] = number(lambda);
  j["mode"] = mode == DensityMode::Exact ? "exact" : "approximate";
  j["parametrization"] = param == Parametrization::Variance ? "variance" : "log-variance";
  j["total"] = number(prior.total);
  ordered_json steps = ordered_json::array();
  for (const auto& s : prior.steps) {
    steps.push_back({{"removed", s.removed}, {"variance", number(s.xi)}, {"log_density", number(s.log_density)}});
  }
  j["steps"] = steps;
  return j.dump(2) + "\n";
}

std::string prior_samples_jsonl(const TreeGraph& graph, const std::vector<PriorDraw>& draws) {
  const auto classes = correlation_classes(graph);
  const PathRuleCorrelation corr(graph);
  std::string out;
  for (const auto& d : draws) {
    ordered_json j;
    ordered_json q2 = ordered_json::object(), dist = ordered_json::object(), rho = ordered_json::object();
    for (std::size_t l = 0; l < graph.num_latents(); ++l) {
      q2[graph.latent_name(l)] = number(d.q2[l]);
      dist[graph.latent_name(l)] = number(d.distances[l]);
    }
    const Matrix c = corr(d.q2);
    for (const auto& cl : classes) {
      const auto [a, b] = cl.pairs.front();
      rho[cl.label(graph)] = number(c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    }
    j["q2"] = q2;
    j["distance"] = dist;
    j["rho"] = rho;
    out += j.dump() + "\n";
  }
  return out;
}

std::string calibration_csv(const std::vector<CalibrationRow>& rows) {
  std::string out = "lambda,conditioning_sd,pair_class,q10,q20,q30,q40,q50,q60,q70,q80,q90,mean,n\n";
  for (const auto& r : rows) {
    out += format_number(r.lambda) + "," + (r.conditioning_sd ? format_number(*r.conditioning_sd) : "") + "," +
           r.pair_class;
    for (double q : r.deciles) out += "," + format_number(q);
    out += "," + format_number(r.mean) + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

}  // namespace graphcorr
