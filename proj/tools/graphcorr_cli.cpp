// Command-line front end. Talks to the library only through the C API.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "graphcorr/graphcorr.h"

namespace {

constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Failure {
  std::string message;
};

void check(gc_status st) {
  if (st != GC_OK) throw Failure{gc_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { gc_string_free(s); }
};
using Text = std::unique_ptr<char, StringDeleter>;

template <class T, void (*Free)(T*)>
struct HandleDeleter {
  void operator()(T* p) const { Free(p); }
};
using Graph = std::unique_ptr<gc_graph, HandleDeleter<gc_graph, gc_graph_free>>;
using Model = std::unique_ptr<gc_model, HandleDeleter<gc_model, gc_model_free>>;
using Dataset = std::unique_ptr<gc_dataset, HandleDeleter<gc_dataset, gc_dataset_free>>;
using Fit = std::unique_ptr<gc_fit, HandleDeleter<gc_fit, gc_fit_free>>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{"cannot open '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collected outputs, written only once every computation has succeeded.
class Outputs {
 public:
  void add(const std::string& path, std::string content) { items_.push_back({path, std::move(content)}); }

  void flush() const {
    for (const auto& [path, content] : items_) {
      if (path.empty() || path == "-") {
        std::cout << content;
        continue;
      }
      const std::string tmp = path + ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Failure{"cannot write '" + path + "'"};
        out << content;
        if (!out.flush()) throw Failure{"cannot write '" + path + "'"};
      }
      std::error_code ec;
      std::filesystem::rename(tmp, path, ec);
      if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Failure{"cannot write '" + path + "'"};
      }
    }
    std::cout.flush();
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

Graph load_graph(const std::string& path) {
  gc_graph* g = nullptr;
  check(gc_graph_load(path.c_str(), &g));
  return Graph(g);
}

struct VarianceArgs {
  std::string inline_list;
  std::string file;

  bool given() const { return !inline_list.empty() || !file.empty(); }

  std::vector<double> resolve(const gc_graph* g) const {
    std::vector<double> q2(gc_graph_num_latents(g));
    const std::string json = file.empty() ? std::string() : read_file(file);
    check(gc_graph_variances(g, inline_list.empty() ? nullptr : inline_list.c_str(),
                             file.empty() ? nullptr : json.c_str(), q2.data()));
    return q2;
  }
};

void add_variance_options(CLI::App* cmd, VarianceArgs& v) {
  cmd->add_option("--var", v.inline_list, "Latent variances as name=value list, e.g. p1=8,p2=1");
  cmd->add_option("--var-file", v.file, "JSON object of latent variances, e.g. {\"p1\": 8}")->check(CLI::ExistingFile);
}

std::vector<double> number_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError(what, "'" + item + "' is not a number");
    }
  }
  if (out.empty()) throw CLI::ValidationError(what, "expected a comma-separated list of numbers");
  return out;
}

// "0:10" (step 1), "0:10:0.5", or "0,1,2.5".
std::vector<double> time_list(const std::string& text) {
  if (text.find(':') == std::string::npos) return number_list(text, "--times");
  std::vector<double> parts;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, ':')) parts.push_back(number_list(item, "--times").front());
  if (parts.size() < 2 || parts.size() > 3) throw CLI::ValidationError("--times", "range must be start:stop[:step]");
  const double step = parts.size() == 3 ? parts[2] : 1.0;
  if (!(step > 0.0) || !(parts[1] >= parts[0])) {
    throw CLI::ValidationError("--times", "range needs start <= stop and a positive step");
  }
  const double count = std::floor((parts[1] - parts[0]) / step + 1e-9) + 1.0;
  if (count > 1e6) throw CLI::ValidationError("--times", "range has more than 10^6 times");
  std::vector<double> out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) out.push_back(parts[0] + static_cast<double>(i) * step);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation structures from latent tree graphs with penalized complexity priors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", gc_version());

  // validate
  std::string graph_path;
  auto* validate = app.add_subcommand("validate", "Check a graph file; lists violations (exit 1 if any)");
  validate->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);

  // corr
  std::string output, format = "csv";
  VarianceArgs vars;
  bool oracle = false;
  auto* corr = app.add_subcommand("corr", "Children correlation matrix at given latent variances");
  corr->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);
  add_variance_options(corr, vars);
  corr->add_flag("--oracle", oracle, "Use the path rule instead of precision-matrix inversion");
  corr->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  corr->add_option("-o,--output", output, "Output file (default: standard output)");

  // sequence
  std::string order;
  auto* sequence = app.add_subcommand("sequence", "Contraction sequence, with correlations when variances are given");
  sequence->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);
  sequence->add_option("--order", order, "Removal order, comma-separated, ending with the root");
  add_variance_options(sequence, vars);
  sequence->add_option("-o,--output", output, "Output file (default: standard output)");

  // prior-eval
  double lambda = 5.0;
  bool approximate = false, log_variance = false;
  auto* prior_eval = app.add_subcommand("prior-eval", "Joint log prior of latent variances, per step");
  prior_eval->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);
  add_variance_options(prior_eval, vars);
  prior_eval->add_option("--lambda", lambda, "Rate of the exponential prior on distance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prior_eval->add_option("--order", order, "Removal order, comma-separated, ending with the root");
  prior_eval->add_flag("--approximate", approximate, "Use the small-variance exponential approximation");
  prior_eval->add_flag("--log-variance", log_variance, "Density of log variance instead of variance");
  prior_eval->add_option("-o,--output", output, "Output file (default: standard output)");

  // prior-sample
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  auto* prior_sample = app.add_subcommand("prior-sample", "Draws from the joint prior as JSON lines");
  prior_sample->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);
  prior_sample->add_option("--lambda", lambda, "Rate of the exponential prior on distance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  prior_sample->add_option("-n", n, "Number of draws")->capture_default_str()->check(CLI::PositiveNumber);
  prior_sample->add_option("--seed", seed, "Random seed")->capture_default_str();
  prior_sample->add_option("--order", order, "Removal order, comma-separated, ending with the root");
  prior_sample->add_option("-o,--output", output, "Output file (default: standard output)");

  // calibrate
  std::string lambdas = "1,2,5,10", sds = "0.1,1,2";
  std::size_t cal_n = 10000;
  auto* calibrate = app.add_subcommand("calibrate", "Deciles of induced correlations over a lambda grid (CSV)");
  calibrate->add_option("--graph", graph_path, "Graph file (DSL)")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--lambdas", lambdas, "Comma-separated lambda grid")->capture_default_str();
  calibrate->add_option("-n", cal_n, "Draws per lambda")->capture_default_str()->check(CLI::PositiveNumber);
  calibrate->add_option("--sds", sds, "Conditioning standard deviations of the other latents")
      ->capture_default_str();
  calibrate->add_option("--seed", seed, "Random seed")->capture_default_str();
  calibrate->add_option("--order", order, "Removal order, comma-separated, ending with the root");
  calibrate->add_option("-o,--output", output, "Output file (default: standard output)");

  // simulate
  std::string spec_path, truths_path, times = "0:10";
  std::size_t individuals = 200;
  auto* simulate = app.add_subcommand("simulate", "Simulate a longitudinal dataset (CSV)");
  simulate->add_option("--spec", spec_path, "Model spec (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--truths", truths_path, "True parameter values (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("-n", individuals, "Number of individuals")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--times", times, "Visit times: start:stop[:step] or comma list")->capture_default_str();
  simulate->add_option("--seed", seed, "Random seed")->capture_default_str();
  simulate->add_option("-o,--output", output, "Output file (default: standard output)");

  // fit
  std::string data_path, report_path, report_csv_path;
  std::size_t iterations = 20000;
  auto* fit = app.add_subcommand("fit", "Fit the model: MAP then adaptive Metropolis (JSON)");
  fit->add_option("--data", data_path, "Dataset (CSV)")->required()->check(CLI::ExistingFile);
  fit->add_option("--spec", spec_path, "Model spec (JSON)")->required()->check(CLI::ExistingFile);
  fit->add_option("--lambda", lambda, "Rate of the exponential prior on distance")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  fit->add_option("--iter", iterations, "Metropolis iterations (first 40% burn-in)")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{10}, std::size_t{100000000}));
  fit->add_option("--seed", seed, "Random seed")->capture_default_str();
  fit->add_flag("--approximate", approximate, "Use the small-variance exponential prior approximation");
  fit->add_option("--truths", truths_path, "True values (JSON); enables the recovery report")
      ->check(CLI::ExistingFile);
  fit->add_option("--report", report_path, "Recovery report, Markdown (requires --truths)");
  fit->add_option("--report-csv", report_csv_path, "Recovery report, CSV (requires --truths)");
  fit->add_option("-o,--output", output, "Fit result file (default: standard output)");

  try {
    app.parse(argc, argv);
    if ((!report_path.empty() || !report_csv_path.empty()) && truths_path.empty()) {
      throw CLI::ValidationError("--report", "requires --truths");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  Outputs outputs;
  try {
    if (validate->parsed()) {
      const std::string text = read_file(graph_path);
      char* report = nullptr;
      const gc_status st = gc_validate_text(text.c_str(), &report);
      Text owned(report);
      if (st == GC_INVALID_GRAPH) {
        std::cout << report;
        std::cout.flush();
        std::cerr << "error: " << gc_last_error() << "\n";
        return kFailure;
      }
      check(st);
      const Graph g = load_graph(graph_path);
      std::cout << "valid: " << gc_graph_num_latents(g.get()) << " latents, " << gc_graph_num_children(g.get())
                << " children\n";
      return 0;
    }

    if (corr->parsed()) {
      const Graph g = load_graph(graph_path);
      const auto q2 = vars.resolve(g.get());
      char* out = nullptr;
      check(gc_correlation(g.get(), q2.data(), q2.size(), oracle, format == "json" ? GC_FORMAT_JSON : GC_FORMAT_CSV,
                           &out));
      outputs.add(output, Text(out).get());
    } else if (sequence->parsed()) {
      const Graph g = load_graph(graph_path);
      std::vector<double> q2;
      if (vars.given()) q2 = vars.resolve(g.get());
      char* out = nullptr;
      check(gc_sequence(g.get(), order.c_str(), vars.given() ? q2.data() : nullptr, q2.size(), &out));
      outputs.add(output, Text(out).get());
    } else if (prior_eval->parsed()) {
      const Graph g = load_graph(graph_path);
      const auto q2 = vars.resolve(g.get());
      char* out = nullptr;
      check(gc_prior_eval(g.get(), q2.data(), q2.size(), lambda, order.empty() ? nullptr : order.c_str(), approximate,
                          log_variance, nullptr, &out));
      outputs.add(output, Text(out).get());
    } else if (prior_sample->parsed()) {
      const Graph g = load_graph(graph_path);
      char* out = nullptr;
      check(gc_prior_sample(g.get(), lambda, n, seed, order.empty() ? nullptr : order.c_str(), &out));
      outputs.add(output, Text(out).get());
    } else if (calibrate->parsed()) {
      const auto l = number_list(lambdas, "--lambdas");
      const auto s = number_list(sds, "--sds");
      const Graph g = load_graph(graph_path);
      char* out = nullptr;
      check(gc_calibrate(g.get(), l.data(), l.size(), cal_n, s.data(), s.size(), seed,
                         order.empty() ? nullptr : order.c_str(), &out));
      outputs.add(output, Text(out).get());
    } else if (simulate->parsed()) {
      const auto t = time_list(times);
      gc_model* m = nullptr;
      check(gc_model_load(spec_path.c_str(), &m));
      const Model model(m);
      const std::string truths = read_file(truths_path);
      gc_dataset* d = nullptr;
      check(gc_simulate(model.get(), truths.c_str(), individuals, t.data(), t.size(), seed, &d));
      const Dataset data(d);
      char* out = nullptr;
      check(gc_dataset_to_csv(data.get(), &out));
      outputs.add(output, Text(out).get());
    } else if (fit->parsed()) {
      gc_model* m = nullptr;
      check(gc_model_load(spec_path.c_str(), &m));
      const Model model(m);
      gc_dataset* d = nullptr;
      check(gc_dataset_load(data_path.c_str(), &d));
      const Dataset data(d);
      const std::string truths = truths_path.empty() ? std::string() : read_file(truths_path);
      gc_fit_options opts = gc_fit_options_default();
      opts.lambda = lambda;
      opts.n_iter = iterations;
      opts.seed = seed;
      opts.approximate = approximate;
      gc_fit* f = nullptr;
      check(gc_fit_run(model.get(), data.get(), &opts, &f));
      const Fit result(f);
      char* out = nullptr;
      check(gc_fit_json(result.get(), &out));
      outputs.add(output, Text(out).get());
      if (!truths_path.empty()) {
        char* md = nullptr;
        check(gc_fit_recovery(result.get(), model.get(), truths.c_str(), GC_FORMAT_MARKDOWN, &md));
        Text owned(md);
        if (!report_path.empty()) {
          outputs.add(report_path, md);
        } else if (report_csv_path.empty()) {
          std::cerr << md;
        }
        if (!report_csv_path.empty()) {
          char* csv = nullptr;
          check(gc_fit_recovery(result.get(), model.get(), truths.c_str(), GC_FORMAT_CSV, &csv));
          outputs.add(report_csv_path, Text(csv).get());
        }
      }
    }
    outputs.flush();
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return kFailure;
  }
  return 0;
}
