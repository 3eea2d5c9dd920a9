#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graphcorr/corrmat.hpp"
#include "graphcorr/graph.hpp"
#include "graphcorr/pcprior.hpp"

namespace graphcorr {

// "p1=8,p2=1" -> assignment. Throws InvalidArgument on malformed entries or
// repeated names. Values are not range-checked here.
VarianceAssignment parse_variance_list(std::string_view text);
// {"p1": 8, "p2": 1}
VarianceAssignment parse_variance_json(std::string_view text);
// Union of both; a latent given in both with different values is an error.
VarianceAssignment merge_variances(const VarianceAssignment& inline_values, const VarianceAssignment& file_values);

// "a,b,c" -> {"a", "b", "c"}; empty text gives an empty list.
std::vector<std::string> parse_name_list(std::string_view text);

// Header row of names, then one row per matrix row.
std::string matrix_csv(const std::vector<std::string>& names, const Matrix& m);
// {"order": [...], "matrix": [[...], ...]}
std::string matrix_json(const std::vector<std::string>& names, const Matrix& m);

// One line per violation, "code: message"; empty when the text is a valid
// graph. Syntax errors propagate as ParseError.
std::string validation_report(std::string_view text, std::size_t* count = nullptr);

// Contraction listing: every model of the sequence with its DSL and, when
// variances are given (graph latent order), its children correlation.
std::string sequence_json(const TreeGraph& graph, const ModelSequence& seq,
                          const std::optional<std::vector<double>>& q2);

std::string joint_prior_json(const JointPrior& prior, double lambda, DensityMode mode, Parametrization param);

// One JSON object per line: {"q2": {...}, "distance": {...}, "rho": {...}},
// rho keyed by correlation class label.
std::string prior_samples_jsonl(const TreeGraph& graph, const std::vector<PriorDraw>& draws);

// lambda,conditioning_sd,pair_class,q10,...,q90,mean,n
std::string calibration_csv(const std::vector<CalibrationRow>& rows);

}  // namespace graphcorr
