#include "graphcorr/graphcorr.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>
#include <optional>
#include <string>

#include "graphcorr/error.hpp"
#include "graphcorr/inference.hpp"
#include "graphcorr/reports.hpp"

using namespace graphcorr;

struct gc_graph {
  TreeGraph graph;
};
struct gc_model {
  ModelSpec spec;
};
struct gc_dataset {
  LongitudinalDataset data;
};
struct gc_fit {
  FitResult result;
};

namespace {

thread_local std::string last_error;

gc_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return GC_INVALID_ARGUMENT;
    case ErrorKind::Parse: return GC_PARSE_ERROR;
    case ErrorKind::InvalidGraph: return GC_INVALID_GRAPH;
    case ErrorKind::Numeric: return GC_NUMERIC_ERROR;
    case ErrorKind::Infeasible: return GC_INFEASIBLE;
    case ErrorKind::Io: return GC_IO_ERROR;
  }
  return GC_INTERNAL_ERROR;
}

// Runs body, translating exceptions into a status and the thread's message.
template <class F>
gc_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return GC_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return GC_INTERNAL_ERROR;
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
}

char* duplicate(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<double> variances(const gc_graph* g, const double* q2, std::size_t n) {
  require(q2, "q2");
  if (n != g->graph.num_latents()) {
    fail(ErrorKind::InvalidArgument, "expected " + std::to_string(g->graph.num_latents()) + " variances, got " +
                                         std::to_string(n));
  }
  return {q2, q2 + n};
}

PCPriorSpec prior_spec(double lambda, const char* order) {
  PCPriorSpec spec;
  spec.lambda = lambda;
  if (order) spec.removal_order = parse_name_list(order);
  return spec;
}

}  // namespace

extern "C" {

const char* gc_version(void) { return "1.0.0"; }

const char* gc_last_error(void) { return last_error.c_str(); }

const char* gc_status_name(gc_status status) {
  switch (status) {
    case GC_OK: return "ok";
    case GC_INVALID_ARGUMENT: return "invalid argument";
    case GC_PARSE_ERROR: return "parse error";
    case GC_INVALID_GRAPH: return "invalid graph";
    case GC_NUMERIC_ERROR: return "numeric error";
    case GC_INFEASIBLE: return "infeasible";
    case GC_IO_ERROR: return "i/o error";
    case GC_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

void gc_string_free(char* s) { std::free(s); }

gc_status gc_graph_parse(const char* text, gc_graph** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new gc_graph{parse_graph(text)};
  });
}

gc_status gc_graph_load(const char* path, gc_graph** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gc_graph{load_graph(path)};
  });
}

void gc_graph_free(gc_graph* graph) { delete graph; }

size_t gc_graph_num_latents(const gc_graph* graph) { return graph ? graph->graph.num_latents() : 0; }
size_t gc_graph_num_children(const gc_graph* graph) { return graph ? graph->graph.num_children() : 0; }

const char* gc_graph_latent_name(const gc_graph* graph, size_t index) {
  if (!graph || index >= graph->graph.num_latents()) return nullptr;
  return graph->graph.latent_name(index).c_str();
}

const char* gc_graph_child_name(const gc_graph* graph, size_t index) {
  if (!graph || index >= graph->graph.num_children()) return nullptr;
  return graph->graph.child_name(index).c_str();
}

gc_status gc_graph_serialize(const gc_graph* graph, char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    *out = duplicate(serialize(graph->graph));
  });
}

gc_status gc_validate_text(const char* text, char** report) {
  std::size_t count = 0;
  const auto st = guarded([&] {
    require(text, "text");
    require(report, "report");
    const auto r = validation_report(text, &count);
    *report = duplicate(r);
  });
  if (st != GC_OK || count == 0) return st;
  last_error = std::to_string(count) + " violation" + (count == 1 ? "" : "s");
  return GC_INVALID_GRAPH;
}

gc_status gc_graph_variances(const gc_graph* graph, const char* inline_list, const char* json_text, double* q2) {
  return guarded([&] {
    require(graph, "graph");
    require(q2, "q2");
    const auto a = inline_list ? parse_variance_list(inline_list) : VarianceAssignment{};
    const auto b = json_text ? parse_variance_json(json_text) : VarianceAssignment{};
    const auto v = aligned_variances(graph->graph, merge_variances(a, b));
    std::copy(v.begin(), v.end(), q2);
  });
}

gc_status gc_correlation(const gc_graph* graph, const double* q2, size_t n, int method_oracle, gc_format format,
                         char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    const auto v = variances(graph, q2, n);
    const Matrix c =
        correlation(graph->graph, v, method_oracle ? CorrelationMethod::PathRule : CorrelationMethod::Inversion);
    if (format == GC_FORMAT_CSV) {
      *out = duplicate(matrix_csv(graph->graph.child_names(), c));
    } else if (format == GC_FORMAT_JSON) {
      *out = duplicate(matrix_json(graph->graph.child_names(), c));
    } else {
      fail(ErrorKind::InvalidArgument, "correlation output must be CSV or JSON");
    }
  });
}

gc_status gc_sequence(const gc_graph* graph, const char* removal_order, const double* q2, size_t n, char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    std::optional<std::vector<std::string>> order;
    if (removal_order && *removal_order) order = parse_name_list(removal_order);
    const auto seq = contract(graph->graph, order);
    std::optional<std::vector<double>> v;
    if (q2) {
      v = variances(graph, q2, n);
      aligned_variances(graph->graph, named_variances(graph->graph, *v));  // positivity check
    }
    *out = duplicate(sequence_json(graph->graph, seq, v));
  });
}

gc_status gc_prior_eval(const gc_graph* graph, const double* q2, size_t n, double lambda, const char* removal_order,
                        int approximate, int log_variance, double* total, char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    const auto v = variances(graph, q2, n);
    const auto mode = approximate ? DensityMode::Approximate : DensityMode::Exact;
    const auto param = log_variance ? Parametrization::LogVariance : Parametrization::Variance;
    const auto jp = joint_log_prior(graph->graph, v, prior_spec(lambda, removal_order), mode, param);
    *out = duplicate(joint_prior_json(jp, lambda, mode, param));
    if (total) *total = jp.total;
  });
}

gc_status gc_prior_sample(const gc_graph* graph, double lambda, size_t n, uint64_t seed, const char* removal_order,
                          char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    const auto draws = sample_prior(graph->graph, prior_spec(lambda, removal_order), n, seed);
    *out = duplicate(prior_samples_jsonl(graph->graph, draws));
  });
}

gc_status gc_calibrate(const gc_graph* graph, const double* lambdas, size_t n_lambdas, size_t n, const double* sds,
                       size_t n_sds, uint64_t seed, const char* removal_order, char** out) {
  return guarded([&] {
    require(graph, "graph");
    require(out, "out");
    require(lambdas, "lambdas");
    std::vector<double> l(lambdas, lambdas + n_lambdas);
    std::vector<double> s = sds ? std::vector<double>(sds, sds + n_sds) : std::vector<double>{0.1, 1.0, 2.0};
    const auto order = removal_order ? parse_name_list(removal_order) : std::vector<std::string>{};
    *out = duplicate(calibration_csv(calibrate_lambda(graph->graph, l, n, s, seed, order)));
  });
}

gc_status gc_model_parse(const char* json_text, const char* base_dir, gc_model** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    auto spec = parse_model_spec(json_text, base_dir ? base_dir : ".");
    spec.check();
    *out = new gc_model{std::move(spec)};
  });
}

gc_status gc_model_load(const char* path, gc_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto spec = load_model_spec(path);
    spec.check();
    *out = new gc_model{std::move(spec)};
  });
}

void gc_model_free(gc_model* model) { delete model; }

size_t gc_model_num_parameters(const gc_model* model) { return model ? parameter_count(model->spec) : 0; }

gc_status gc_dataset_parse(const char* csv_text, gc_dataset** out) {
  return guarded([&] {
    require(csv_text, "csv_text");
    require(out, "out");
    *out = new gc_dataset{parse_dataset_csv(csv_text)};
  });
}

gc_status gc_dataset_load(const char* path, gc_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gc_dataset{load_dataset_csv(path)};
  });
}

void gc_dataset_free(gc_dataset* data) { delete data; }

size_t gc_dataset_num_rows(const gc_dataset* data) { return data ? data->data.rows.size() : 0; }
size_t gc_dataset_num_individuals(const gc_dataset* data) { return data ? data->data.num_individuals() : 0; }

gc_status gc_dataset_to_csv(const gc_dataset* data, char** out) {
  return guarded([&] {
    require(data, "data");
    require(out, "out");
    *out = duplicate(dataset_to_csv(data->data));
  });
}

gc_status gc_simulate(const gc_model* model, const char* truths_json, size_t n, const double* times, size_t n_times,
                      uint64_t seed, gc_dataset** out) {
  return guarded([&] {
    require(model, "model");
    require(truths_json, "truths_json");
    require(times, "times");
    require(out, "out");
    if (n == 0) fail(ErrorKind::InvalidArgument, "number of individuals must be positive");
    const auto truth = truths_to_parameters(model->spec, parse_truths(truths_json));
    auto sim = simulate_dataset(model->spec, truth, n, std::vector<double>(times, times + n_times), seed);
    *out = new gc_dataset{std::move(sim.data)};
  });
}

gc_fit_options gc_fit_options_default(void) {
  gc_fit_options o;
  o.lambda = 5.0;
  o.n_iter = 20000;
  o.seed = 0;
  o.approximate = 0;
  return o;
}

gc_status gc_fit_run(const gc_model* model, const gc_dataset* data, const gc_fit_options* options, gc_fit** out) {
  return guarded([&] {
    require(model, "model");
    require(data, "data");
    require(out, "out");
    const gc_fit_options o = options ? *options : gc_fit_options_default();
    PriorSpec prior;
    prior.pc.lambda = o.lambda;
    prior.mode = o.approximate ? DensityMode::Approximate : DensityMode::Exact;
    if (!(o.lambda > 0.0)) fail(ErrorKind::InvalidArgument, "lambda must be positive");
    FitOptions fo;
    fo.n_iter = o.n_iter;
    fo.seed = o.seed;
    const MixedModel mm(model->spec, data->data);
    *out = new gc_fit{fit(mm, prior, fo)};
  });
}

void gc_fit_free(gc_fit* fit) { delete fit; }

gc_status gc_fit_json(const gc_fit* fit, char** out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    *out = duplicate(fit_to_json(fit->result));
  });
}

gc_status gc_fit_summary(const gc_fit* fit, const char* name, double* mean, double* lower, double* upper) {
  return guarded([&] {
    require(fit, "fit");
    require(name, "name");
    const auto& s = fit->result.summary(name);
    if (mean) *mean = s.mean;
    if (lower) *lower = s.lower;
    if (upper) *upper = s.upper;
  });
}

double gc_fit_acceptance(const gc_fit* fit) { return fit ? fit->result.acceptance : 0.0; }

gc_status gc_fit_recovery(const gc_fit* fit, const gc_model* model, const char* truths_json, gc_format format,
                          char** out) {
  return guarded([&] {
    require(fit, "fit");
    require(model, "model");
    require(truths_json, "truths_json");
    require(out, "out");
    const auto rows = recovery_report(truth_values(model->spec, parse_truths(truths_json)), fit->result);
    if (format == GC_FORMAT_MARKDOWN) {
      *out = duplicate(recovery_markdown(rows));
    } else if (format == GC_FORMAT_CSV) {
      *out = duplicate(recovery_csv(rows));
    } else {
      fail(ErrorKind::InvalidArgument, "recovery output must be Markdown or CSV");
    }
  });
}

}  // extern "C"
