#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "btloc/core/log.hpp"
#include "btloc/pipeline/payload.hpp"

namespace btloc::pipe {

enum class Layer { Source, Model, Kernel, Sink };

inline constexpr std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::Source: return "SOURCE";
    case Layer::Model: return "MODEL";
    case Layer::Kernel: return "KERNEL";
    case Layer::Sink: return "SINK";
  }
  return "?";
}

struct PortSpec {
  std::string name;
  PortType type;
};

using ModuleId = std::int64_t;

/// Callback handed to Module::process; delivers a payload on one of the
/// module's output ports to every subscriber before returning.
using Emit = std::function<void(const std::string& port, const Payload&)>;

/// Input port name used when a payload is injected from outside the graph.
inline const std::string kExternalPort = "external";

class Module {
 public:
  virtual ~Module() = default;

  virtual Layer layer() const = 0;
  virtual std::string type_name() const = 0;
  virtual std::vector<PortSpec> inputs() const = 0;
  virtual std::vector<PortSpec> outputs() const = 0;

  virtual void process(const std::string& input_port, const Payload& payload, const Emit& emit) = 0;

  /// Called when process() threw. Kernels turn this into a NOT_CONVERGED record.
  virtual void on_error(const std::string& /*input_port*/, const Payload& /*payload*/,
                        const std::exception& /*e*/, const Emit& /*emit*/) {}

  virtual nlohmann::json config() const { return nlohmann::json::object(); }

  ModuleId id = 0;
  std::string name;

  std::optional<PortSpec> input(const std::string& port) const { return find(inputs(), port); }
  std::optional<PortSpec> output(const std::string& port) const { return find(outputs(), port); }

 private:
  static std::optional<PortSpec> find(const std::vector<PortSpec>& ports, const std::string& n) {
    for (const auto& p : ports) {
      if (p.name == n) return p;
    }
    return std::nullopt;
  }
};

struct Connection {
  ModuleId from = 0;
  std::string from_port;
  ModuleId to = 0;
  std::string to_port;

  auto operator<=>(const Connection&) const = default;
};

/// Module graph of the localiser. Topology is copy-on-write: a dispatch keeps
/// the snapshot it started with, so connect/disconnect issued from inside a
/// dispatch only affect later dispatches.
class PipelineGraph {
 public:
  PipelineGraph() : topo_(std::make_shared<const Topology>()) {}

  ModuleId add_module(std::shared_ptr<Module> m) {
    if (!m) throw std::invalid_argument("add_module: null module");
    auto t = std::make_shared<Topology>(*topo_);
    if (m->id == 0) m->id = next_id_;
    if (t->modules.count(m->id) != 0) {
      throw std::invalid_argument("add_module: duplicate module id " + std::to_string(m->id));
    }
    next_id_ = std::max(next_id_, m->id + 1);
    const ModuleId id = m->id;
    t->modules.emplace(id, std::move(m));
    topo_ = std::move(t);
    return id;
  }

  /// Removes a module together with every edge touching it.
  void remove_module(ModuleId id) {
    if (topo_->modules.count(id) == 0) throw std::invalid_argument("remove_module: unknown module");
    auto t = std::make_shared<Topology>(*topo_);
    t->modules.erase(id);
    for (auto it = t->subscribers.begin(); it != t->subscribers.end();) {
      auto& subs = it->second;
      subs.erase(std::remove_if(subs.begin(), subs.end(), [id](const Endpoint& e) { return e.module == id; }),
                 subs.end());
      if (it->first.first == id || subs.empty()) {
        it = t->subscribers.erase(it);
      } else {
        ++it;
      }
    }
    topo_ = std::move(t);
  }

  /// Returns false (and warns) when the connection already exists.
  bool connect(const Connection& c) {
    const Module& from = module_ref(c.from, "connect");
    const Module& to = module_ref(c.to, "connect");
    const auto out = from.output(c.from_port);
    const auto in = to.input(c.to_port);
    if (!out) throw std::invalid_argument("connect: '" + from.name + "' has no output port '" + c.from_port + "'");
    if (!in) throw std::invalid_argument("connect: '" + to.name + "' has no input port '" + c.to_port + "'");
    if (out->type != in->type) {
      throw std::invalid_argument("connect: port type mismatch " + std::string(to_string(out->type)) + " -> " +
                                  std::string(to_string(in->type)));
    }
    if (!layer_edge_allowed(from.layer(), to.layer(), out->type)) {
      throw std::invalid_argument("connect: " + std::string(to_string(from.layer())) + " -> " +
                                  std::string(to_string(to.layer())) + " edge not allowed");
    }
    if (connected(c)) {
      log::warn("pipeline: duplicate connection ", from.name, ".", c.from_port, " -> ", to.name, ".", c.to_port);
      return false;
    }
    auto t = std::make_shared<Topology>(*topo_);
    t->subscribers[{c.from, c.from_port}].push_back({c.to, c.to_port});
    if (has_cycle(*t)) throw std::invalid_argument("connect: edge would create a cycle");
    topo_ = std::move(t);
    return true;
  }

  void disconnect(const Connection& c) {
    if (!connected(c)) throw std::invalid_argument("disconnect: unknown connection");
    auto t = std::make_shared<Topology>(*topo_);
    auto& subs = t->subscribers[{c.from, c.from_port}];
    subs.erase(std::find(subs.begin(), subs.end(), Endpoint{c.to, c.to_port}));
    if (subs.empty()) t->subscribers.erase({c.from, c.from_port});
    topo_ = std::move(t);
  }

  bool connected(const Connection& c) const {
    auto it = topo_->subscribers.find({c.from, c.from_port});
    if (it == topo_->subscribers.end()) return false;
    return std::find(it->second.begin(), it->second.end(), Endpoint{c.to, c.to_port}) != it->second.end();
  }

  /// Feeds `payload` into `source` and propagates it depth-first.
  void dispatch(ModuleId source, const Payload& payload) {
    std::shared_ptr<const Topology> snap = topo_;
    auto it = snap->modules.find(source);
    if (it == snap->modules.end()) throw std::invalid_argument("dispatch: unknown source module");
    deliver(*snap, *it->second, kExternalPort, payload);
  }

  bool has_module(ModuleId id) const { return topo_->modules.count(id) != 0; }

  std::shared_ptr<Module> module(ModuleId id) const {
    auto it = topo_->modules.find(id);
    return it == topo_->modules.end() ? nullptr : it->second;
  }

  std::shared_ptr<Module> module_by_name(const std::string& name) const {
    for (const auto& [id, m] : topo_->modules) {
      if (m->name == name) return m;
    }
    return nullptr;
  }

  /// Every edge, grouped by output port, in subscription order.
  std::vector<Connection> connections() const {
    std::vector<Connection> out;
    for (const auto& [key, subs] : topo_->subscribers) {
      for (const auto& e : subs) out.push_back({key.first, key.second, e.module, e.port});
    }
    return out;
  }

  std::vector<ModuleId> module_ids() const {
    std::vector<ModuleId> out;
    for (const auto& [id, m] : topo_->modules) out.push_back(id);
    return out;
  }

  bool acyclic() const { return !has_cycle(*topo_); }

  /// Edges flow Source -> Model -> Kernel -> Sink; a source may feed a kernel
  /// directly with motion inputs.
  static bool layer_edge_allowed(Layer from, Layer to, PortType type) {
    if (from == Layer::Source && to == Layer::Model) return true;
    if (from == Layer::Model && to == Layer::Kernel) return true;
    if (from == Layer::Kernel && to == Layer::Sink) return true;
    if (from == Layer::Source && to == Layer::Kernel && type == PortType::MotionInput) return true;
    return false;
  }

 private:
  struct Endpoint {
    ModuleId module;
    std::string port;
    bool operator==(const Endpoint&) const = default;
  };
  struct Topology {
    std::map<ModuleId, std::shared_ptr<Module>> modules;
    std::map<std::pair<ModuleId, std::string>, std::vector<Endpoint>> subscribers;
  };

  const Module& module_ref(ModuleId id, const char* op) const {
    auto it = topo_->modules.find(id);
    if (it == topo_->modules.end()) {
      throw std::invalid_argument(std::string(op) + ": unknown module " + std::to_string(id));
    }
    return *it->second;
  }

  static void deliver(const Topology& topo, Module& m, const std::string& port, const Payload& payload) {
    const Emit emit = [&topo, &m](const std::string& out_port, const Payload& p) {
      auto it = topo.subscribers.find({m.id, out_port});
      if (it == topo.subscribers.end()) return;
      for (const auto& e : it->second) {
        auto mit = topo.modules.find(e.module);
        if (mit != topo.modules.end()) deliver(topo, *mit->second, e.port, p);
      }
    };
    try {
      m.process(port, payload, emit);
    } catch (const std::exception& e) {
      log::warn("pipeline: module '", m.name, "' failed on ", port, ": ", e.what());
      try {
        m.on_error(port, payload, e, emit);
      } catch (const std::exception& e2) {
        log::error("pipeline: error handler of '", m.name, "' threw: ", e2.what());
      }
    }
  }

  static bool has_cycle(const Topology& t) {
    std::map<ModuleId, int> state;  // 0 unvisited, 1 on stack, 2 done
    std::function<bool(ModuleId)> visit = [&](ModuleId id) {
      state[id] = 1;
      for (const auto& [key, subs] : t.subscribers) {
        if (key.first != id) continue;
        for (const auto& e : subs) {
          if (state[e.module] == 1) return true;
          if (state[e.module] == 0 && visit(e.module)) return true;
        }
      }
      state[id] = 2;
      return false;
    };
    for (const auto& [id, m] : t.modules) {
      if (state[id] == 0 && visit(id)) return true;
    }
    return false;
  }

  std::shared_ptr<const Topology> topo_;
  ModuleId next_id_ = 1;
};

}  // namespace btloc::pipe
