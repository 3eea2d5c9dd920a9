#include "graphcorr/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "graphcorr/error.hpp"
#include "graphcorr/textio.hpp"

namespace graphcorr {

namespace {

// -------------------------------------------------------------------------
// Lexing
// -------------------------------------------------------------------------

struct Token {
  enum Type { Ident, Colon } type;
  std::string text;
  std::size_t column;  // 1-based
};

bool ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

std::vector<Token> tokenize_line(std::string_view line, std::size_t line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (c == ' ' || c == '\t') {
      ++i;
      continue;
    }
    if (c == ':') {
      out.push_back({Token::Colon, ":", i + 1});
      ++i;
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < line.size() && ident_char(line[j])) ++j;
      out.push_back({Token::Ident, std::string(line.substr(i, j - i)), i + 1});
      i = j;
      continue;
    }
    throw ParseError(line_no, i + 1, std::string("unexpected character '") + c + "'");
  }
  return out;
}

Declaration parse_line(const std::vector<Token>& toks, std::size_t line_no,
                       std::size_t line_len) {
  const auto& kw = toks[0];
  if (kw.type != Token::Ident || (kw.text != "latent" && kw.text != "child")) {
    throw ParseError(line_no, kw.column, "expected 'latent' or 'child', found '" + kw.text + "'");
  }
  Declaration d;
  d.kind = kw.text == "latent" ? NodeKind::Latent : NodeKind::Child;
  d.line = line_no;
  if (toks.size() < 2) throw ParseError(line_no, line_len + 1, "expected node name");
  if (toks[1].type != Token::Ident) throw ParseError(line_no, toks[1].column, "expected node name");
  d.name = toks[1].text;
  if (toks.size() == 2) {
    if (d.kind == NodeKind::Child) {
      throw ParseError(line_no, line_len + 1, "child '" + d.name + "' needs ': PARENT'");
    }
    return d;
  }
  if (toks[2].type != Token::Colon) throw ParseError(line_no, toks[2].column, "expected ':'");
  if (toks.size() < 4) throw ParseError(line_no, line_len + 1, "expected parent name after ':'");
  if (toks[3].type != Token::Ident) throw ParseError(line_no, toks[3].column, "expected parent name");
  if (toks.size() > 4) throw ParseError(line_no, toks[4].column, "unexpected trailing token");
  d.parent = toks[3].text;
  return d;
}

std::string where(const Declaration& d) {
  return d.line > 0 ? " (line " + std::to_string(d.line) + ")" : std::string();
}

}  // namespace

Declarations parse_declarations(std::string_view text) {
  Declarations decls;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    auto toks = tokenize_line(line, line_no);
    if (!toks.empty()) decls.push_back(parse_line(toks, line_no, line.size()));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return decls;
}

// -------------------------------------------------------------------------
// Validation
// -------------------------------------------------------------------------

std::vector<Violation> validate(const Declarations& decls) {
  std::vector<Violation> out;
  std::map<std::string, std::size_t> first;  // name -> index into decls
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& d = decls[i];
    if (d.name.empty()) {
      out.push_back({"empty-name", {}, "node with empty name" + where(d)});
      continue;
    }
    if (!first.emplace(d.name, i).second) {
      out.push_back({"duplicate-node", {d.name}, "node '" + d.name + "' declared twice" + where(d)});
    }
  }

  std::size_t n_latent = 0, n_child = 0;
  std::vector<std::string> roots;
  for (std::size_t i = 0; i < decls.size(); ++i) {
    const auto& d = decls[i];
    if (d.kind == NodeKind::Latent) {
      ++n_latent;
    } else {
      ++n_child;
    }
    if (!d.parent) {
      if (d.kind == NodeKind::Latent) {
        roots.push_back(d.name);
      } else {
        out.push_back({"child-without-parent", {d.name},
                       "child '" + d.name + "' has no parent" + where(d)});
      }
      continue;
    }
    auto it = first.find(*d.parent);
    if (it == first.end()) {
      out.push_back({"unknown-parent", {d.name, *d.parent},
                     "parent '" + *d.parent + "' of '" + d.name + "' is not declared" + where(d)});
      continue;
    }
    const auto& p = decls[it->second];
    if (p.kind == NodeKind::Child) {
      out.push_back({"child-as-parent", {d.name, p.name},
                     "child '" + p.name + "' used as parent of '" + d.name + "'" + where(d)});
      continue;
    }
    if (*d.parent == d.name) {
      out.push_back({"cycle", {d.name}, "node '" + d.name + "' is its own parent" + where(d)});
      continue;
    }
    if (d.kind == NodeKind::Latent && it->second > i) {
      out.push_back({"latent-order", {d.name, p.name},
                     "latent '" + d.name + "' declared before its parent '" + p.name + "'" + where(d)});
    }
  }

  if (n_latent == 0) out.push_back({"no-latents", {}, "graph has no latent node"});
  if (n_child == 0) out.push_back({"no-children", {}, "graph has no child node"});
  if (roots.size() > 1) {
    std::string list;
    for (const auto& r : roots) list += (list.empty() ? "" : ", ") + r;
    out.push_back({"multiple-roots", roots, "more than one root latent: " + list});
  }

  // Cycles among latents: follow parent links; a chain longer than the
  // number of latents must revisit a node.
  std::set<std::string> reported;
  for (const auto& d : decls) {
    if (d.kind != NodeKind::Latent || !d.parent) continue;
    std::vector<std::string> chain{d.name};
    std::string cur = d.name;
    bool cyclic = false;
    for (std::size_t step = 0; step <= decls.size(); ++step) {
      auto it = first.find(cur);
      if (it == first.end()) break;
      const auto& node = decls[it->second];
      if (!node.parent || node.kind != NodeKind::Latent) break;
      cur = *node.parent;
      if (cur == node.name) break;  // self-loop reported above
      if (std::find(chain.begin(), chain.end(), cur) != chain.end()) {
        cyclic = true;
        break;
      }
      chain.push_back(cur);
    }
    if (cyclic && !reported.count(cur)) {
      // Report the loop once, keyed by the node where it closes.
      std::vector<std::string> loop(std::find(chain.begin(), chain.end(), cur), chain.end());
      for (const auto& n : loop) reported.insert(n);
      std::string list;
      for (const auto& n : loop) list += (list.empty() ? "" : " -> ") + n;
      out.push_back({"cycle", loop, "latent cycle: " + list + " -> " + cur});
    }
  }
  // Every latent must carry at least one child below it; otherwise its
  // variance has no effect on any correlation.
  std::set<std::string> covered;
  for (const auto& d : decls) {
    if (d.kind != NodeKind::Child || !d.parent) continue;
    std::string cur = *d.parent;
    for (std::size_t step = 0; step <= decls.size(); ++step) {
      auto it = first.find(cur);
      if (it == first.end() || decls[it->second].kind != NodeKind::Latent) break;
      if (!covered.insert(cur).second) break;
      if (!decls[it->second].parent) break;
      cur = *decls[it->second].parent;
    }
  }
  for (const auto& d : decls) {
    if (d.kind == NodeKind::Latent && !d.name.empty() && !covered.count(d.name) && n_child > 0) {
      out.push_back({"childless-latent", {d.name}, "latent '" + d.name + "' has no child below it" + where(d)});
    }
  }
  if (roots.empty() && n_latent > 0) {
    out.push_back({"no-root", {}, "no latent without a parent"});
  }
  return out;
}

// -------------------------------------------------------------------------
// TreeGraph
// -------------------------------------------------------------------------

TreeGraph TreeGraph::from_declarations(const Declarations& decls) {
  auto violations = validate(decls);
  if (!violations.empty()) fail(ErrorKind::InvalidGraph, violations.front().message);

  TreeGraph g;
  std::map<std::string, std::size_t> latent_idx;
  for (const auto& d : decls) {
    if (d.kind == NodeKind::Latent) {
      latent_idx[d.name] = g.latent_names_.size();
      g.latent_names_.push_back(d.name);
    }
  }
  // The root is the only parentless latent and topological order puts it first.
  for (const auto& d : decls) {
    if (d.kind == NodeKind::Latent) {
      g.latent_parent_.push_back(d.parent ? latent_idx.at(*d.parent) : npos);
    } else {
      g.child_names_.push_back(d.name);
      g.child_parent_.push_back(latent_idx.at(*d.parent));
    }
  }
  return g;
}

std::optional<std::size_t> TreeGraph::latent_index(std::string_view name) const {
  auto it = std::find(latent_names_.begin(), latent_names_.end(), name);
  if (it == latent_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - latent_names_.begin());
}

std::optional<std::size_t> TreeGraph::child_index(std::string_view name) const {
  auto it = std::find(child_names_.begin(), child_names_.end(), name);
  if (it == child_names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - child_names_.begin());
}

std::vector<std::size_t> TreeGraph::latent_ancestors(std::size_t latent) const {
  std::vector<std::size_t> out;
  for (std::size_t p = latent_parent_.at(latent); p != npos; p = latent_parent_[p]) out.push_back(p);
  return out;
}

std::vector<std::size_t> TreeGraph::child_ancestors(std::size_t child) const {
  std::vector<std::size_t> out;
  for (std::size_t p = child_parent_.at(child); p != npos; p = latent_parent_[p]) out.push_back(p);
  return out;
}

std::size_t TreeGraph::direct_child_count(std::size_t latent) const {
  return static_cast<std::size_t>(std::count(child_parent_.begin(), child_parent_.end(), latent));
}

Declarations TreeGraph::declarations() const {
  Declarations out;
  for (std::size_t i = 0; i < latent_names_.size(); ++i) {
    Declaration d{NodeKind::Latent, latent_names_[i], std::nullopt, 0};
    if (latent_parent_[i] != npos) d.parent = latent_names_[latent_parent_[i]];
    out.push_back(std::move(d));
  }
  for (std::size_t i = 0; i < child_names_.size(); ++i) {
    out.push_back({NodeKind::Child, child_names_[i], latent_names_[child_parent_[i]], 0});
  }
  return out;
}

TreeGraph parse_graph(std::string_view text) {
  return TreeGraph::from_declarations(parse_declarations(text));
}

TreeGraph load_graph(const std::string& path) { return parse_graph(read_text_file(path, "graph file")); }

std::string serialize(const TreeGraph& graph) {
  std::string out;
  for (const auto& d : graph.declarations()) {
    out += d.kind == NodeKind::Latent ? "latent " : "child ";
    out += d.name;
    if (d.parent) out += " : " + *d.parent;
    out += '\n';
  }
  return out;
}

std::vector<std::string> ancestors(const TreeGraph& graph, std::string_view node) {
  std::vector<std::size_t> idx;
  if (auto c = graph.child_index(node)) {
    idx = graph.child_ancestors(*c);
  } else if (auto l = graph.latent_index(node)) {
    idx = graph.latent_ancestors(*l);
  } else {
    fail(ErrorKind::InvalidArgument, "unknown node '" + std::string(node) + "'");
  }
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(graph.latent_name(i));
  return out;
}

std::vector<std::string> common_ancestors(const TreeGraph& graph, std::string_view a,
                                          std::string_view b) {
  auto ia = graph.child_index(a);
  auto ib = graph.child_index(b);
  if (!ia || !ib) fail(ErrorKind::InvalidArgument, "common_ancestors expects two children");
  if (*ia == *ib) fail(ErrorKind::InvalidArgument, "common_ancestors expects distinct children");
  auto chain_a = graph.child_ancestors(*ia);
  auto chain_b = graph.child_ancestors(*ib);
  std::vector<std::string> out;
  for (auto l : chain_a) {
    if (std::find(chain_b.begin(), chain_b.end(), l) != chain_b.end()) {
      out.push_back(graph.latent_name(l));
    }
  }
  return out;
}

// -------------------------------------------------------------------------
// Contraction
// -------------------------------------------------------------------------

TreeGraph remove_latent(const TreeGraph& graph, std::string_view latent) {
  auto idx = graph.latent_index(latent);
  if (!idx) fail(ErrorKind::InvalidArgument, "unknown latent '" + std::string(latent) + "'");
  if (*idx == graph.root()) fail(ErrorKind::InvalidArgument, "the root latent cannot be removed from a graph");
  Declarations decls = graph.declarations();
  const std::string gone(latent);
  const std::string new_parent = graph.latent_name(graph.latent_parent(*idx));
  std::erase_if(decls, [&](const Declaration& d) { return d.name == gone; });
  for (auto& d : decls) {
    if (d.parent && *d.parent == gone) d.parent = new_parent;
  }
  return TreeGraph::from_declarations(decls);
}

std::vector<std::string> default_removal_order(const TreeGraph& graph) {
  return {graph.latent_names().rbegin(), graph.latent_names().rend()};
}

ModelSequence contract(const TreeGraph& graph,
                       const std::optional<std::vector<std::string>>& order) {
  auto removal = order ? *order : default_removal_order(graph);
  if (removal.size() != graph.num_latents()) {
    fail(ErrorKind::InvalidArgument, "removal order must list every latent exactly once");
  }
  std::set<std::string> seen;
  for (const auto& n : removal) {
    if (!graph.latent_index(n)) fail(ErrorKind::InvalidArgument, "removal order names unknown latent '" + n + "'");
    if (!seen.insert(n).second) fail(ErrorKind::InvalidArgument, "removal order repeats '" + n + "'");
  }
  if (removal.back() != graph.latent_name(graph.root())) {
    fail(ErrorKind::InvalidArgument, "removal order must end with the root '" +
                                         graph.latent_name(graph.root()) + "'");
  }

  ModelSequence seq;
  seq.removal_order = removal;
  seq.children = graph.child_names();
  seq.graphs.push_back(graph);

  for (std::size_t k = 0; k + 1 < removal.size(); ++k) {
    seq.graphs.push_back(remove_latent(seq.graphs.back(), removal[k]));
  }
  return seq;
}

}  // namespace graphcorr
