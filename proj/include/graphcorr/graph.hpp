#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace graphcorr {

enum class NodeKind { Latent, Child };

// One line of the graph DSL, before any structural checking.
struct Declaration {
  NodeKind kind = NodeKind::Latent;
  std::string name;
  std::optional<std::string> parent;
  std::size_t line = 0;  // 1-based source line, 0 when built programmatically
};

using Declarations = std::vector<Declaration>;

// A structural problem found by validate(). `code` is a stable kebab-case
// identifier (multiple-roots, cycle, ...); `nodes` lists the offenders.
struct Violation {
  std::string code;
  std::vector<std::string> nodes;
  std::string message;
};

// Tokenizes DSL text into declarations. Only syntax is checked here.
// Throws ParseError with the offending line and column.
Declarations parse_declarations(std::string_view text);

// Returns every violated tree invariant; empty means the declarations
// describe a valid rooted latent tree.
std::vector<Violation> validate(const Declarations& decls);

// Rooted latent tree. Latents are stored in declaration order, which is a
// topological order, so latent 0 is always the root. Children are leaves
// attached to exactly one latent.
class TreeGraph {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Throws Error(InvalidGraph) carrying the first violation.
  static TreeGraph from_declarations(const Declarations& decls);

  std::size_t num_latents() const { return latent_names_.size(); }
  std::size_t num_children() const { return child_names_.size(); }
  std::size_t root() const { return 0; }

  const std::string& latent_name(std::size_t i) const { return latent_names_.at(i); }
  const std::string& child_name(std::size_t i) const { return child_names_.at(i); }
  const std::vector<std::string>& latent_names() const { return latent_names_; }
  const std::vector<std::string>& child_names() const { return child_names_; }

  std::optional<std::size_t> latent_index(std::string_view name) const;
  std::optional<std::size_t> child_index(std::string_view name) const;

  // Parent latent index; npos for the root.
  std::size_t latent_parent(std::size_t latent) const { return latent_parent_.at(latent); }
  std::size_t child_parent(std::size_t child) const { return child_parent_.at(child); }

  // Latent indices from the direct parent up to the root.
  std::vector<std::size_t> child_ancestors(std::size_t child) const;
  std::vector<std::size_t> latent_ancestors(std::size_t latent) const;

  // Number of leaf children attached directly to a latent.
  std::size_t direct_child_count(std::size_t latent) const;

  Declarations declarations() const;

  friend bool operator==(const TreeGraph&, const TreeGraph&) = default;

 private:
  TreeGraph() = default;

  std::vector<std::string> latent_names_;
  std::vector<std::string> child_names_;
  std::vector<std::size_t> latent_parent_;
  std::vector<std::size_t> child_parent_;
};

TreeGraph parse_graph(std::string_view text);
TreeGraph load_graph(const std::string& path);

// Same DSL: latents first in declaration order, then children.
std::string serialize(const TreeGraph& graph);

// Node names from the node's parent up to the root (nearest first).
// Throws InvalidArgument for an unknown node.
std::vector<std::string> ancestors(const TreeGraph& graph, std::string_view node);

// Latents shared by the ancestor chains of two distinct children, nearest
// first. Always contains the root.
std::vector<std::string> common_ancestors(const TreeGraph& graph, std::string_view a,
                                          std::string_view b);

// Nested sequence produced by deleting one latent at a time. graphs[k] has
// P - k latents; the terminal identity model is implicit (index P), since a
// graph without latents is not a TreeGraph.
struct ModelSequence {
  std::vector<TreeGraph> graphs;
  std::vector<std::string> removal_order;
  std::vector<std::string> children;

  std::size_t size() const { return graphs.size() + 1; }
  bool is_identity(std::size_t k) const { return k == graphs.size(); }
};

// Copy of the graph without one non-root latent; its direct dependents move
// to its parent.
TreeGraph remove_latent(const TreeGraph& graph, std::string_view latent);

// Reverse declaration order, so the root goes last.
std::vector<std::string> default_removal_order(const TreeGraph& graph);

// Removes latents in `order` (default: default_removal_order), re-attaching
// every direct dependent of a removed latent to that latent's parent.
// Throws InvalidArgument when the order is not a permutation of the latents
// ending with the root.
ModelSequence contract(const TreeGraph& graph,
                       const std::optional<std::vector<std::string>>& order = std::nullopt);

}  // namespace graphcorr
