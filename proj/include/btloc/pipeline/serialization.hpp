#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "btloc/pipeline/graph.hpp"

namespace btloc::pipe {

/// {"modules": [{id, name, type, layer, inputs: [{name, type}], outputs: [...], config}],
///  "edges": [{from, from_port, to, to_port}]}
inline nlohmann::json dump_topology(const PipelineGraph& g) {
  nlohmann::json j;
  j["modules"] = nlohmann::json::array();
  for (ModuleId id : g.module_ids()) {
    const auto m = g.module(id);
    auto ports = [](const std::vector<PortSpec>& ps) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& p : ps) a.push_back({{"name", p.name}, {"type", std::string(to_string(p.type))}});
      return a;
    };
    j["modules"].push_back({{"id", id},
                            {"name", m->name},
                            {"type", m->type_name()},
                            {"layer", std::string(to_string(m->layer()))},
                            {"inputs", ports(m->inputs())},
                            {"outputs", ports(m->outputs())},
                            {"config", m->config()}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& c : g.connections()) {
    j["edges"].push_back({{"from", c.from}, {"from_port", c.from_port}, {"to", c.to}, {"to_port", c.to_port}});
  }
  return j;
}

/// Creates a module from its dumped record (type, name, config).
using ModuleFactory = std::function<std::shared_ptr<Module>(const nlohmann::json& record)>;

/// Rebuilds modules and edges from a dump. Module ids are preserved.
inline void load_topology(PipelineGraph& g, const nlohmann::json& j, const ModuleFactory& factory) {
  for (const auto& rec : j.at("modules")) {
    auto m = factory(rec);
    if (!m) throw std::invalid_argument("load_topology: factory returned null for type " + rec.at("type").get<std::string>());
    m->id = rec.at("id").get<ModuleId>();
    if (rec.contains("name")) m->name = rec.at("name").get<std::string>();
    g.add_module(std::move(m));
  }
  for (const auto& e : j.at("edges")) {
    g.connect({e.at("from").get<ModuleId>(), e.at("from_port").get<std::string>(), e.at("to").get<ModuleId>(),
               e.at("to_port").get<std::string>()});
  }
}

inline void load_topology_file(PipelineGraph& g, const std::string& path, const ModuleFactory& factory) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file: " + path);
  load_topology(g, nlohmann::json::parse(in), factory);
}

}  // namespace btloc::pipe
