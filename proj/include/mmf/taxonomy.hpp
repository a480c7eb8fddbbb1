#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmf/error.hpp"
#include "mmf/text.hpp"

namespace mmf {

using SubclassId = int;
using SuperclassId = int;

/// Unvalidated structure content, as read from a structure file.
struct RawStructure {
  std::string name;
  std::vector<std::string> superclasses;
  std::vector<std::string> subclasses;
  std::vector<std::pair<std::string, std::string>> parent_of;  // subclass -> superclass
};

/// A node of a three-level tree: the root, a superclass, or a subclass.
struct NodeId {
  enum class Level { Root, Superclass, Subclass };
  Level level = Level::Root;
  int index = 0;

  auto operator<=>(const NodeId&) const = default;
};

/// One three-level label tree: root -> superclasses -> subclasses.
/// Immutable once built through validate_structure().
class LabelStructure {
 public:
  LabelStructure() = default;

  const std::string& name() const { return name_; }
  const std::vector<std::string>& superclass_names() const { return superclasses_; }
  const std::vector<std::string>& subclass_names() const { return subclasses_; }
  const std::vector<SuperclassId>& parent_map() const { return parent_of_; }
  int subclass_count() const { return static_cast<int>(subclasses_.size()); }
  int superclass_count() const { return static_cast<int>(superclasses_.size()); }

  SuperclassId superclass_of(SubclassId c) const {
    check_id(c);
    return parent_of_[static_cast<std::size_t>(c)];
  }

  /// Superclass identifier namespaced by the owning structure, so that
  /// superclasses of different structures never compare equal.
  std::string qualified_superclass(SuperclassId s) const {
    if (s < 0 || s >= superclass_count())
      throw Error(ErrorKind::IdOutOfRange, "superclass id " + std::to_string(s));
    return name_ + "/" + superclasses_[static_cast<std::size_t>(s)];
  }

  std::vector<SubclassId> children(SuperclassId s) const {
    std::vector<SubclassId> out;
    for (SubclassId c = 0; c < subclass_count(); ++c)
      if (parent_of_[static_cast<std::size_t>(c)] == s) out.push_back(c);
    return out;
  }

  void check_id(SubclassId c) const {
    if (c < 0 || c >= subclass_count())
      throw Error(ErrorKind::IdOutOfRange, "subclass id " + std::to_string(c) + " not in [0, " +
                                               std::to_string(subclass_count()) + ")");
  }

  bool operator==(const LabelStructure&) const = default;

 private:
  friend LabelStructure validate_structure(const RawStructure& raw);

  std::string name_;
  std::vector<std::string> superclasses_;
  std::vector<std::string> subclasses_;
  std::vector<SuperclassId> parent_of_;
};

inline LabelStructure validate_structure(const RawStructure& raw) {
  if (raw.superclasses.empty())
    throw Error(ErrorKind::EmptySuperclass, "structure '" + raw.name + "' has no superclasses");

  std::unordered_map<std::string, SuperclassId> super_index;
  for (std::size_t s = 0; s < raw.superclasses.size(); ++s) {
    if (!super_index.emplace(raw.superclasses[s], static_cast<SuperclassId>(s)).second)
      throw Error(ErrorKind::DuplicateSuperclass, raw.superclasses[s]);
  }
  std::unordered_map<std::string, SubclassId> sub_index;
  for (std::size_t c = 0; c < raw.subclasses.size(); ++c) {
    if (!sub_index.emplace(raw.subclasses[c], static_cast<SubclassId>(c)).second)
      throw Error(ErrorKind::DuplicateSubclass, raw.subclasses[c]);
  }

  std::vector<SuperclassId> parent(raw.subclasses.size(), -1);
  for (const auto& [sub, super] : raw.parent_of) {
    const auto cit = sub_index.find(sub);
    if (cit == sub_index.end())
      throw Error(ErrorKind::UnknownSubclass, "'" + sub + "' is not in the subclass list");
    const auto sit = super_index.find(super);
    if (sit == super_index.end())
      throw Error(ErrorKind::UnknownSuperclass, "'" + super + "' (parent of '" + sub + "')");
    auto& slot = parent[static_cast<std::size_t>(cit->second)];
    if (slot != -1) throw Error(ErrorKind::DuplicateSubclass, "'" + sub + "' mapped twice");
    slot = sit->second;
  }

  std::vector<int> child_count(raw.superclasses.size(), 0);
  for (std::size_t c = 0; c < parent.size(); ++c) {
    if (parent[c] == -1) throw Error(ErrorKind::OrphanSubclass, raw.subclasses[c]);
    ++child_count[static_cast<std::size_t>(parent[c])];
  }
  for (std::size_t s = 0; s < child_count.size(); ++s)
    if (child_count[s] == 0) throw Error(ErrorKind::EmptySuperclass, raw.superclasses[s]);

  LabelStructure out;
  out.name_ = raw.name;
  out.superclasses_ = raw.superclasses;
  out.subclasses_ = raw.subclasses;
  out.parent_of_ = std::move(parent);
  return out;
}

/// Builds a structure from an id-level assignment. Superclass s is named
/// `prefix + s`.
inline LabelStructure structure_from_assignment(const std::string& name,
                                                const std::vector<std::string>& subclass_names,
                                                const std::vector<int>& assignment,
                                                int superclass_count,
                                                const std::string& prefix = "s") {
  if (assignment.size() != subclass_names.size())
    throw Error(ErrorKind::DimensionMismatch, "assignment length differs from subclass count");
  RawStructure raw;
  raw.name = name;
  raw.subclasses = subclass_names;
  for (int s = 0; s < superclass_count; ++s) raw.superclasses.push_back(prefix + std::to_string(s));
  for (std::size_t c = 0; c < assignment.size(); ++c) {
    const int s = assignment[c];
    const std::string super =
        (s >= 0 && s < superclass_count) ? raw.superclasses[static_cast<std::size_t>(s)] : "<invalid>";
    raw.parent_of.emplace_back(subclass_names[c], super);
  }
  return validate_structure(raw);
}

/// Number of edges between two leaves: 0, 2 (siblings) or 4 (via root).
inline int tie_distance(const LabelStructure& h, SubclassId c, SubclassId c_hat) {
  if (c == c_hat) {
    h.check_id(c);
    return 0;
  }
  return h.superclass_of(c) == h.superclass_of(c_hat) ? 2 : 4;
}

/// Height of the lowest common ancestor above the leaf level.
inline int lca_height(const LabelStructure& h, SubclassId c, SubclassId c_hat) {
  if (c == c_hat) {
    h.check_id(c);
    return 0;
  }
  return h.superclass_of(c) == h.superclass_of(c_hat) ? 1 : 2;
}

/// Nodes on the path root -> superclass -> subclass (root included).
inline std::array<NodeId, 3> augmented_set(const LabelStructure& h, SubclassId c) {
  const SuperclassId s = h.superclass_of(c);
  return {NodeId{NodeId::Level::Root, 0}, NodeId{NodeId::Level::Superclass, s},
          NodeId{NodeId::Level::Subclass, c}};
}

/// Ordered list of structures over one shared subclass space. May be empty
/// (a flat model); the metrics require at least one member.
class StructureSet {
 public:
  StructureSet() = default;

  explicit StructureSet(std::vector<LabelStructure> structures) : structures_(std::move(structures)) {
    for (std::size_t m = 1; m < structures_.size(); ++m) {
      if (structures_[m].subclass_names() != structures_[0].subclass_names())
        throw Error(ErrorKind::SubclassSpaceMismatch,
                    "structure '" + structures_[m].name() + "' does not share the subclass list of '" +
                        structures_[0].name() + "'");
    }
  }

  std::size_t size() const { return structures_.size(); }
  bool empty() const { return structures_.empty(); }
  const LabelStructure& operator[](std::size_t m) const { return structures_[m]; }
  auto begin() const { return structures_.begin(); }
  auto end() const { return structures_.end(); }
  const std::vector<LabelStructure>& structures() const { return structures_; }

  int subclass_count() const { return structures_.empty() ? 0 : structures_[0].subclass_count(); }

 private:
  std::vector<LabelStructure> structures_;
};

// ---------------------------------------------------------------------------
// Structure file: {"name", "superclasses", "subclasses", "parent_of"}.

inline RawStructure parse_structure_json(const std::string& document) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("structure file: ") + e.what());
  }
  RawStructure raw;
  try {
    raw.name = j.at("name").get<std::string>();
    raw.superclasses = j.at("superclasses").get<std::vector<std::string>>();
    raw.subclasses = j.at("subclasses").get<std::vector<std::string>>();
    for (const auto& [sub, super] : j.at("parent_of").items())
      raw.parent_of.emplace_back(sub, super.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("structure file: ") + e.what());
  }
  return raw;
}

inline std::string structure_to_json(const LabelStructure& h) {
  nlohmann::ordered_json j;
  j["name"] = h.name();
  j["superclasses"] = h.superclass_names();
  j["subclasses"] = h.subclass_names();
  nlohmann::ordered_json parents = nlohmann::ordered_json::object();
  for (SubclassId c = 0; c < h.subclass_count(); ++c)
    parents[h.subclass_names()[static_cast<std::size_t>(c)]] =
        h.superclass_names()[static_cast<std::size_t>(h.superclass_of(c))];
  j["parent_of"] = std::move(parents);
  return j.dump(2) + "\n";
}

inline LabelStructure load_structure_file(const std::string& path) {
  return validate_structure(parse_structure_json(text::read_file(path)));
}

inline void save_structure_file(const LabelStructure& h, const std::string& path) {
  text::write_file(path, structure_to_json(h));
}

}  // namespace mmf
