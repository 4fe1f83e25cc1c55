// SPDX-License-Identifier: Apache-2.0
#include "promptdb/language_tree.hpp"

#include <fstream>

namespace promptdb {

LanguageTree LanguageTree::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      raise(ErrorCode::BadInput,
            path + ":" + std::to_string(lineno) + ": expected parent<TAB>child");
    }
    edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return from_edges(edges);
}

LanguageTree LanguageTree::from_edges(
    const std::vector<std::pair<std::string, std::string>>& edges) {
  if (edges.empty()) raise(ErrorCode::BadInput, "language tree has no edges");
  LanguageTree tree;
  for (const auto& [parent, child] : edges) {
    auto [it, inserted] = tree.parent_.emplace(child, parent);
    if (!inserted) {
      raise(ErrorCode::BadInput, "node '" + child + "' has two parents");
    }
  }
  tree.validate();
  return tree;
}

void LanguageTree::validate() {
  std::set<std::string> parents;
  std::set<std::string> nodes;
  for (const auto& [child, parent] : parent_) {
    parents.insert(parent);
    nodes.insert(child);
    nodes.insert(parent);
  }

  std::set<std::string> roots;
  for (const auto& node : nodes) {
    if (!parent_.count(node)) roots.insert(node);
  }
  if (roots.size() != 1) {
    raise(ErrorCode::BadInput,
          "language tree must have exactly one root, found " +
              std::to_string(roots.size()));
  }
  root_ = *roots.begin();

  // Depths double as the cycle/connectivity check: every node must reach the
  // root in fewer steps than there are nodes.
  depth_[root_] = 0;
  for (const auto& node : nodes) {
    std::vector<std::string> path;
    std::string cur = node;
    while (!depth_.count(cur)) {
      path.push_back(cur);
      auto it = parent_.find(cur);
      if (it == parent_.end() || path.size() > nodes.size()) {
        raise(ErrorCode::BadInput, "language tree has a cycle or is disconnected");
      }
      cur = it->second;
    }
    int d = depth_.at(cur);
    for (auto it = path.rbegin(); it != path.rend(); ++it) depth_[*it] = ++d;
  }

  for (const auto& node : nodes) {
    if (!parents.count(node)) leaves_.insert(node);
  }
}

const std::string& LanguageTree::require_leaf(const std::string& name) const {
  if (!is_leaf(name)) {
    raise(ErrorCode::UnknownLanguage, "'" + name + "' is not a language in the tree");
  }
  return name;
}

int LanguageTree::distance(const std::string& a, const std::string& b) const {
  require_leaf(a);
  require_leaf(b);
  std::string x = a;
  std::string y = b;
  int dist = 0;
  int dx = depth_.at(x);
  int dy = depth_.at(y);
  while (dx > dy) {
    x = parent_.at(x);
    --dx;
    ++dist;
  }
  while (dy > dx) {
    y = parent_.at(y);
    --dy;
    ++dist;
  }
  while (x != y) {
    x = parent_.at(x);
    y = parent_.at(y);
    dist += 2;
  }
  return dist;
}

std::string LanguageTree::proxy_language(const std::string& target,
                                         const std::set<std::string>& available) const {
  require_leaf(target);
  if (available.empty()) raise(ErrorCode::NoCandidates, "no available languages");
  std::string best;
  int best_dist = -1;
  for (const auto& lang : available) {  // set order = ISO code order
    const int d = distance(target, lang);
    if (best_dist < 0 || d < best_dist) {
      best = lang;
      best_dist = d;
    }
  }
  return best;
}

}  // namespace promptdb
