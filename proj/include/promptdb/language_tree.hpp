// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "promptdb/error.hpp"

namespace promptdb {

/// Rooted language family tree. Languages are leaves; inner nodes are family
/// names. Distance is plain path length between leaves.
class LanguageTree {
 public:
  /// Loads a tree from a text file, one "parent<TAB>child" edge per line.
  static LanguageTree load(const std::string& path);

  static LanguageTree from_edges(
      const std::vector<std::pair<std::string, std::string>>& edges);

  bool is_leaf(const std::string& name) const { return leaves_.count(name) > 0; }
  const std::set<std::string>& leaves() const { return leaves_; }
  const std::string& root() const { return root_; }

  /// Length of the unique path between two leaves. Raises UnknownLanguage
  /// when an argument is not a leaf.
  int distance(const std::string& a, const std::string& b) const;

  /// Closest available leaf to the target; ties break to the smallest ISO
  /// code. Raises UnknownLanguage, NoCandidates.
  std::string proxy_language(const std::string& target,
                             const std::set<std::string>& available) const;

 private:
  void validate();
  const std::string& require_leaf(const std::string& name) const;

  std::map<std::string, std::string> parent_;  // child -> parent
  std::map<std::string, int> depth_;
  std::set<std::string> leaves_;
  std::string root_;
};

}  // namespace promptdb
