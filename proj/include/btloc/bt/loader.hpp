#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "btloc/bt/node.hpp"

namespace btloc::bt {

/// Installs callbacks/hooks on a node built from a binding name.
using Configurator = std::function<void(Node&)>;

class BindingRegistry {
 public:
  void add(std::string binding, Configurator configure) {
    bindings_[std::move(binding)] = std::move(configure);
  }

  /// Named subtree factory, referenced from definitions as {"kind": "SUBTREE", "binding": name}.
  using SubtreeFactory = std::function<NodePtr(NodeIds&)>;
  void add_subtree(std::string name, SubtreeFactory factory) { subtrees_[std::move(name)] = std::move(factory); }

  bool has(const std::string& binding) const { return bindings_.count(binding) != 0; }
  bool has_subtree(const std::string& name) const { return subtrees_.count(name) != 0; }

  NodePtr subtree(const std::string& name, NodeIds& ids) const {
    auto it = subtrees_.find(name);
    if (it == subtrees_.end()) throw std::invalid_argument("unknown subtree: " + name);
    return it->second(ids);
  }

  void configure(Node& n) const {
    auto it = bindings_.find(n.binding);
    if (it == bindings_.end()) throw std::invalid_argument("unknown binding: " + n.binding);
    it->second(n);
  }

  NodePtr leaf(NodeIds& ids, NodeKind kind, std::string name, std::string binding) const {
    auto n = make_leaf(ids, kind, std::move(name), {});
    n->binding = std::move(binding);
    configure(*n);
    return n;
  }

  NodePtr composite(NodeIds& ids, NodeKind kind, std::string name, std::vector<NodePtr> children,
                    std::string binding = {}) const {
    auto n = make_composite(ids, kind, std::move(name), std::move(children));
    n->binding = std::move(binding);
    if (!n->binding.empty()) configure(*n);
    return n;
  }

 private:
  std::map<std::string, Configurator> bindings_;
  std::map<std::string, SubtreeFactory> subtrees_;
};

/// Tree definition schema:
///   {"kind": "SELECTOR", "name": "...", "binding": "...", "children": [...]}
/// "id" is optional. Leaves need a binding; composites may carry one for hooks.
/// {"kind": "SUBTREE", "binding": name} expands a registered subtree factory.
inline NodePtr load_tree(const nlohmann::json& j, const BindingRegistry& reg, NodeIds& ids) {
  if (j.at("kind").get<std::string>() == "SUBTREE") return reg.subtree(j.at("binding").get<std::string>(), ids);
  const NodeKind kind = node_kind_from_string(j.at("kind").get<std::string>());
  const std::string name = j.value("name", std::string{});
  const std::string binding = j.value("binding", std::string{});
  NodePtr n;
  if (is_composite(kind)) {
    std::vector<NodePtr> children;
    if (j.contains("children")) {
      for (const auto& c : j.at("children")) children.push_back(load_tree(c, reg, ids));
    }
    n = reg.composite(ids, kind, name, std::move(children), binding);
  } else {
    if (binding.empty()) throw std::invalid_argument("leaf '" + name + "' has no binding");
    if (j.contains("children") && !j.at("children").empty()) {
      throw std::invalid_argument("leaf '" + name + "' has children");
    }
    n = reg.leaf(ids, kind, name, binding);
  }
  if (j.contains("id")) {
    n->id = j.at("id").get<NodeId>();
    ids.reserve_above(n->id);
  }
  return n;
}

inline NodePtr load_tree_file(const std::string& path, const BindingRegistry& reg, NodeIds& ids) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tree definition: " + path);
  return load_tree(nlohmann::json::parse(in), reg, ids);
}

inline nlohmann::json dump_tree(const Node& n, bool with_ids = true) {
  nlohmann::json j;
  if (with_ids) j["id"] = n.id;
  j["kind"] = std::string(to_string(n.kind));
  j["name"] = n.name;
  if (!n.binding.empty()) j["binding"] = n.binding;
  if (n.composite()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : n.children) j["children"].push_back(dump_tree(*c, with_ids));
  }
  return j;
}

}  // namespace btloc::bt
