#include <algorithm>
#include <charconv>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "graphcorr/error.hpp"
#include "graphcorr/inference.hpp"
#include "graphcorr/textio.hpp"
#include "json.hpp"

namespace graphcorr {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_real(std::string_view field, std::size_t line, std::size_t column, const char* what) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ParseError(line, column, std::string("invalid number for '") + what + "': '" + std::string(field) + "'");
  }
  return v;
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string(what) + ": " + e.what());
  }
}

double json_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(ErrorKind::InvalidArgument, where + " must be a number");
  return j.get<double>();
}

std::map<std::string, double> number_map(const json& j, const std::string& where) {
  std::map<std::string, double> out;
  if (j.is_null()) return out;
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, where + " must be an object");
  for (const auto& [k, v] : j.items()) out[k] = json_number(v, where + "." + k);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

std::size_t LongitudinalDataset::num_individuals() const {
  std::unordered_set<std::string> ids;
  for (const auto& r : rows) ids.insert(r.id);
  return ids.size();
}

LongitudinalDataset parse_dataset_csv(const std::string& text) {
  LongitudinalDataset data;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<int> column_of;  // field index -> column role
  static const std::vector<std::string> kColumns{"id", "marker", "time", "y", "x_bin", "x_con"};
  bool have_header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    if (!have_header) {
      std::vector<bool> seen(kColumns.size(), false);
      for (std::size_t f = 0; f < fields.size(); ++f) {
        const auto name = trim(fields[f]);
        const auto it = std::find(kColumns.begin(), kColumns.end(), name);
        if (it == kColumns.end()) throw ParseError(line_no, 1, "unknown column '" + std::string(name) + "'");
        const auto idx = static_cast<std::size_t>(it - kColumns.begin());
        if (seen[idx]) throw ParseError(line_no, 1, "duplicate column '" + std::string(name) + "'");
        seen[idx] = true;
        column_of.push_back(static_cast<int>(idx));
      }
      for (std::size_t c = 0; c < 4; ++c) {
        if (!seen[c]) throw ParseError(line_no, 1, "missing required column '" + kColumns[c] + "'");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != column_of.size()) {
      throw ParseError(line_no, 1,
                       "expected " + std::to_string(column_of.size()) + " fields, found " + std::to_string(fields.size()));
    }
    Observation obs;
    std::size_t column = 1;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const auto field = trim(fields[f]);
      switch (column_of[f]) {
        case 0:
          if (field.empty()) throw ParseError(line_no, column, "empty id");
          obs.id = std::string(field);
          break;
        case 1:
          if (field.empty()) throw ParseError(line_no, column, "empty marker");
          obs.marker = std::string(field);
          break;
        case 2: obs.time = parse_real(field, line_no, column, "time"); break;
        case 3: obs.y = parse_real(field, line_no, column, "y"); break;
        case 4: obs.x_bin = parse_real(field, line_no, column, "x_bin"); break;
        case 5: obs.x_con = parse_real(field, line_no, column, "x_con"); break;
      }
      column += fields[f].size() + 1;
    }
    data.rows.push_back(std::move(obs));
  }
  if (!have_header) throw ParseError(1, 1, "missing header line");
  return data;
}

LongitudinalDataset load_dataset_csv(const std::string& path) {
  return parse_dataset_csv(read_text_file(path, "dataset file"));
}

std::string dataset_to_csv(const LongitudinalDataset& data) {
  std::string out = "id,marker,time,y,x_bin,x_con\n";
  for (const auto& r : data.rows) {
    out += r.id + "," + r.marker + "," + format_number(r.time) + "," + format_number(r.y) + "," +
           format_number(r.x_bin) + "," + format_number(r.x_con) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model spec
// ---------------------------------------------------------------------------

const char* term_name(Term t) {
  switch (t) {
    case Term::Intercept: return "intercept";
    case Term::T: return "t";
    case Term::T2: return "t2";
    case Term::T3: return "t3";
    case Term::XBin: return "x_bin";
    case Term::XCon: return "x_con";
  }
  return "?";
}

std::optional<Term> term_from_name(std::string_view name) {
  for (Term t : {Term::Intercept, Term::T, Term::T2, Term::T3, Term::XBin, Term::XCon}) {
    if (name == term_name(t)) return t;
  }
  return std::nullopt;
}

std::vector<Term> MarkerSpec::fixed_terms() const {
  std::vector<Term> out{Term::Intercept};
  const Term powers[] = {Term::T, Term::T2, Term::T3};
  for (int d = 0; d < fixed_degree; ++d) out.push_back(powers[d]);
  for (Term c : {Term::XBin, Term::XCon}) {
    if (std::find(covariates.begin(), covariates.end(), c) != covariates.end()) out.push_back(c);
  }
  return out;
}

void ModelSpec::check() const {
  if (markers.empty()) fail(ErrorKind::InvalidArgument, "model spec needs at least one marker");
  if (residual_sd && !(*residual_sd > 0.0)) fail(ErrorKind::InvalidArgument, "residual_sd must be positive");
  std::set<std::string> names;
  std::vector<int> owner(graph.num_children(), -1);
  for (const auto& m : markers) {
    if (m.name.empty()) fail(ErrorKind::InvalidArgument, "marker name must not be empty");
    if (!names.insert(m.name).second) fail(ErrorKind::InvalidArgument, "duplicate marker '" + m.name + "'");
    if (m.fixed_degree < 0 || m.fixed_degree > 3) {
      fail(ErrorKind::InvalidArgument, "fixed_degree of marker '" + m.name + "' must be in 0..3");
    }
    for (Term c : m.covariates) {
      if (c != Term::XBin && c != Term::XCon) {
        fail(ErrorKind::InvalidArgument, "covariates of marker '" + m.name + "' must be x_bin or x_con");
      }
    }
    std::set<Term> terms;
    for (const auto& [term, child] : m.random) {
      if (term == Term::XBin || term == Term::XCon) {
        fail(ErrorKind::InvalidArgument, "random effects of marker '" + m.name + "' must be time terms");
      }
      if (!terms.insert(term).second) {
        fail(ErrorKind::InvalidArgument, std::string("duplicate random term '") + term_name(term) + "' in marker '" +
                                             m.name + "'");
      }
      auto idx = graph.child_index(child);
      if (!idx) fail(ErrorKind::InvalidArgument, "random effect '" + child + "' is not a child of the graph");
      if (owner[*idx] >= 0) fail(ErrorKind::InvalidArgument, "child '" + child + "' is used by two random effects");
      owner[*idx] = 1;
    }
  }
  for (std::size_t c = 0; c < owner.size(); ++c) {
    if (owner[c] < 0) {
      fail(ErrorKind::InvalidArgument, "child '" + graph.child_name(c) + "' is not assigned to a random effect");
    }
  }
}

std::size_t ModelSpec::num_fixed() const {
  std::size_t n = 0;
  for (const auto& m : markers) n += m.fixed_terms().size();
  return n;
}

std::size_t ModelSpec::marker_index(std::string_view name) const {
  for (std::size_t m = 0; m < markers.size(); ++m) {
    if (markers[m].name == name) return m;
  }
  fail(ErrorKind::InvalidArgument, "unknown marker '" + std::string(name) + "'");
}

std::vector<std::pair<std::size_t, Term>> ModelSpec::child_terms() const {
  std::vector<std::pair<std::size_t, Term>> out(graph.num_children());
  for (std::size_t m = 0; m < markers.size(); ++m) {
    for (const auto& [term, child] : markers[m].random) out[*graph.child_index(child)] = {m, term};
  }
  return out;
}

ModelSpec parse_model_spec(const std::string& json_text, const std::string& base_dir) {
  const json j = parse_json(json_text, "model spec");
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "model spec must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "graph" && k != "graph_file" && k != "markers" && k != "residual_sd") {
      fail(ErrorKind::InvalidArgument, "unknown model spec key '" + k + "'");
    }
  }
  std::optional<TreeGraph> graph;
  if (j.contains("graph") == j.contains("graph_file")) {
    fail(ErrorKind::InvalidArgument, "model spec needs exactly one of 'graph' and 'graph_file'");
  }
  if (j.contains("graph")) {
    if (!j["graph"].is_string()) fail(ErrorKind::InvalidArgument, "'graph' must be a string");
    graph = parse_graph(j["graph"].get<std::string>());
  } else {
    if (!j["graph_file"].is_string()) fail(ErrorKind::InvalidArgument, "'graph_file' must be a string");
    std::filesystem::path p = j["graph_file"].get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    graph = load_graph(p.string());
  }

  ModelSpec spec{*graph, {}, std::nullopt};
  if (!j.contains("markers") || !j["markers"].is_array()) {
    fail(ErrorKind::InvalidArgument, "model spec needs a 'markers' array");
  }
  for (const auto& mj : j["markers"]) {
    if (!mj.is_object()) fail(ErrorKind::InvalidArgument, "each marker must be an object");
    MarkerSpec m;
    for (const auto& [k, v] : mj.items()) {
      if (k != "name" && k != "fixed_degree" && k != "covariates" && k != "random") {
        fail(ErrorKind::InvalidArgument, "unknown marker key '" + k + "'");
      }
    }
    if (!mj.contains("name") || !mj["name"].is_string()) fail(ErrorKind::InvalidArgument, "marker needs a 'name'");
    m.name = mj["name"].get<std::string>();
    if (mj.contains("fixed_degree")) {
      if (!mj["fixed_degree"].is_number_integer()) {
        fail(ErrorKind::InvalidArgument, "fixed_degree of marker '" + m.name + "' must be an integer");
      }
      m.fixed_degree = mj["fixed_degree"].get<int>();
    }
    if (mj.contains("covariates")) {
      if (!mj["covariates"].is_array()) fail(ErrorKind::InvalidArgument, "'covariates' must be an array");
      for (const auto& c : mj["covariates"]) {
        auto t = c.is_string() ? term_from_name(c.get<std::string>()) : std::nullopt;
        if (!t) fail(ErrorKind::InvalidArgument, "unknown covariate in marker '" + m.name + "'");
        m.covariates.push_back(*t);
      }
    }
    if (mj.contains("random")) {
      if (!mj["random"].is_object()) fail(ErrorKind::InvalidArgument, "'random' must map time terms to children");
      for (const auto& [k, v] : mj["random"].items()) {
        auto t = term_from_name(k);
        if (!t) fail(ErrorKind::InvalidArgument, "unknown random term '" + k + "' in marker '" + m.name + "'");
        if (!v.is_string()) fail(ErrorKind::InvalidArgument, "random term '" + k + "' must name a child");
        m.random.emplace_back(*t, v.get<std::string>());
      }
      std::sort(m.random.begin(), m.random.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    spec.markers.push_back(std::move(m));
  }
  if (j.contains("residual_sd") && !j["residual_sd"].is_null()) {
    spec.residual_sd = json_number(j["residual_sd"], "residual_sd");
  }
  spec.check();
  return spec;
}

ModelSpec load_model_spec(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_model_spec(read_text_file(path, "model spec"), dir.empty() ? "." : dir.string());
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

Vector ParameterVector::flatten() const {
  Vector x(beta.size() + log_sigma_c.size() + theta.size() + log_sigma_eps.size());
  x << beta, log_sigma_c, theta, log_sigma_eps;
  return x;
}

std::size_t parameter_count(const ModelSpec& spec) {
  return spec.num_fixed() + spec.graph.num_children() + spec.graph.num_latents() +
         (spec.residual_sd ? 0 : spec.markers.size());
}

ParameterVector ParameterVector::unflatten(const ModelSpec& spec, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != parameter_count(spec)) {
    fail(ErrorKind::InvalidArgument, "parameter vector has " + std::to_string(x.size()) + " entries, expected " +
                                         std::to_string(parameter_count(spec)));
  }
  const auto nb = static_cast<Eigen::Index>(spec.num_fixed());
  const auto k = static_cast<Eigen::Index>(spec.graph.num_children());
  const auto p = static_cast<Eigen::Index>(spec.graph.num_latents());
  ParameterVector out;
  out.beta = x.segment(0, nb);
  out.log_sigma_c = x.segment(nb, k);
  out.theta = x.segment(nb + k, p);
  out.log_sigma_eps = x.segment(nb + k + p, x.size() - nb - k - p);
  return out;
}

std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> out;
  for (const auto& m : spec.markers) {
    for (Term t : m.fixed_terms()) out.push_back("beta[" + m.name + ":" + term_name(t) + "]");
  }
  for (const auto& c : spec.graph.child_names()) out.push_back("log_sigma_c[" + c + "]");
  for (const auto& l : spec.graph.latent_names()) out.push_back("theta[" + l + "]");
  if (!spec.residual_sd) {
    for (const auto& m : spec.markers) out.push_back("log_sigma_eps[" + m.name + "]");
  }
  return out;
}

std::vector<std::string> ParameterVector::names(const ModelSpec& spec) const { return parameter_names(spec); }

// ---------------------------------------------------------------------------
// Truths
// ---------------------------------------------------------------------------

Truths parse_truths(const std::string& json_text) {
  const json j = parse_json(json_text, "truths");
  if (!j.is_object()) fail(ErrorKind::InvalidArgument, "truths must be a JSON object");
  Truths t;
  for (const auto& [k, v] : j.items()) {
    if (k == "beta") {
      // Either {"y1:intercept": v} or {"y1": {"intercept": v}}.
      if (!v.is_object()) fail(ErrorKind::InvalidArgument, "truths.beta must be an object");
      for (const auto& [mk, mv] : v.items()) {
        if (mv.is_object()) {
          for (const auto& [tk, tv] : mv.items()) t.beta[mk + ":" + tk] = json_number(tv, "truths.beta." + mk + "." + tk);
        } else {
          t.beta[mk] = json_number(mv, "truths.beta." + mk);
        }
      }
    } else if (k == "sigma_c") {
      t.sigma_c = number_map(v, "truths.sigma_c");
    } else if (k == "rho") {
      t.rho = number_map(v, "truths.rho");
    } else if (k == "sigma_eps") {
      t.sigma_eps = number_map(v, "truths.sigma_eps");
    } else {
      fail(ErrorKind::InvalidArgument, "unknown truths key '" + k + "'");
    }
  }
  return t;
}

Truths load_truths(const std::string& path) { return parse_truths(read_text_file(path, "truths file")); }

namespace {

std::vector<PairTarget> pair_targets(const Truths& truths) {
  std::vector<PairTarget> out;
  for (const auto& [key, rho] : truths.rho) {
    const auto colon = key.find(':');
    if (colon == std::string::npos) fail(ErrorKind::InvalidArgument, "rho key '" + key + "' must be 'a:b'");
    out.push_back({key.substr(0, colon), key.substr(colon + 1), rho});
  }
  return out;
}

}  // namespace

ParameterVector truths_to_parameters(const ModelSpec& spec, const Truths& truths) {
  ParameterVector p;
  const auto names = parameter_names(spec);
  p.beta.resize(static_cast<Eigen::Index>(spec.num_fixed()));
  std::set<std::string> used;
  Eigen::Index b = 0;
  for (const auto& m : spec.markers) {
    for (Term t : m.fixed_terms()) {
      const std::string key = m.name + ":" + term_name(t);
      auto it = truths.beta.find(key);
      if (it == truths.beta.end()) fail(ErrorKind::InvalidArgument, "truths lack beta '" + key + "'");
      used.insert(key);
      p.beta(b++) = it->second;
    }
  }
  for (const auto& [key, v] : truths.beta) {
    if (!used.count(key)) fail(ErrorKind::InvalidArgument, "truths beta '" + key + "' is not a fixed effect of the model");
  }

  const auto& g = spec.graph;
  p.log_sigma_c.resize(static_cast<Eigen::Index>(g.num_children()));
  for (std::size_t c = 0; c < g.num_children(); ++c) {
    auto it = truths.sigma_c.find(g.child_name(c));
    if (it == truths.sigma_c.end()) fail(ErrorKind::InvalidArgument, "truths lack sigma_c '" + g.child_name(c) + "'");
    if (!(it->second > 0.0)) fail(ErrorKind::InvalidArgument, "sigma_c '" + it->first + "' must be positive");
    p.log_sigma_c(static_cast<Eigen::Index>(c)) = std::log(it->second);
  }
  if (truths.sigma_c.size() != g.num_children()) {
    fail(ErrorKind::InvalidArgument, "truths sigma_c names a node that is not a child of the graph");
  }

  const auto q2 = solve_variances(g, pair_targets(truths));
  p.theta.resize(static_cast<Eigen::Index>(q2.size()));
  for (std::size_t l = 0; l < q2.size(); ++l) p.theta(static_cast<Eigen::Index>(l)) = std::log(q2[l]);

  if (!spec.residual_sd) {
    p.log_sigma_eps.resize(static_cast<Eigen::Index>(spec.markers.size()));
    for (std::size_t m = 0; m < spec.markers.size(); ++m) {
      auto it = truths.sigma_eps.find(spec.markers[m].name);
      if (it == truths.sigma_eps.end()) {
        fail(ErrorKind::InvalidArgument, "truths lack sigma_eps '" + spec.markers[m].name + "'");
      }
      if (!(it->second >= 0.0)) fail(ErrorKind::InvalidArgument, "sigma_eps must be nonnegative");
      p.log_sigma_eps(static_cast<Eigen::Index>(m)) = std::log(it->second);
    }
  }
  for (const auto& [key, v] : truths.sigma_eps) spec.marker_index(key);
  return p;
}

std::map<std::string, double> truth_values(const ModelSpec& spec, const Truths& truths) {
  const auto p = truths_to_parameters(spec, truths);
  const auto& g = spec.graph;
  std::map<std::string, double> out;
  for (std::size_t c = 0; c < g.num_children(); ++c) {
    out["sigma_c[" + g.child_name(c) + "]"] = std::exp(p.log_sigma_c(static_cast<Eigen::Index>(c)));
  }
  const auto classes = correlation_classes(g);
  for (const auto& t : pair_targets(truths)) {
    const auto i = *g.child_index(t.a), j = *g.child_index(t.b);
    out["rho[" + classes[class_of_pair(classes, i, j)].label(g) + "]"] = t.rho;
  }
  for (std::size_t l = 0; l < g.num_latents(); ++l) {
    out["q2[" + g.latent_name(l) + "]"] = std::exp(p.theta(static_cast<Eigen::Index>(l)));
  }
  Eigen::Index b = 0;
  for (const auto& m : spec.markers) {
    for (Term t : m.fixed_terms()) out["beta[" + m.name + ":" + term_name(t) + "]"] = p.beta(b++);
  }
  for (std::size_t m = 0; m < spec.markers.size(); ++m) {
    const double v = spec.residual_sd ? *spec.residual_sd : std::exp(p.log_sigma_eps(static_cast<Eigen::Index>(m)));
    out["sigma_eps[" + spec.markers[m].name + "]"] = v;
  }
  return out;
}

}  // namespace graphcorr
