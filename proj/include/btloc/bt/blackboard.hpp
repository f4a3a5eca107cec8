#pragma once

#include <any>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace btloc::bt {

/// Key/value store read by tree leaves.
///
/// Producers on any thread write to the live inbox with post() (latest value
/// wins) or append() (every value kept). refresh() moves the inbox into the
/// snapshot atomically; between refreshes the snapshot never changes except
/// through set()/erase() issued by the tick thread itself. Append topics
/// expose only the values received since the previous refresh.
class Blackboard {
 public:
  template <class T>
  void post(const std::string& topic, T value) {
    std::lock_guard lock(inbox_mutex_);
    latest_inbox_[topic] = std::any(std::move(value));
  }

  template <class T>
  void append(const std::string& topic, T value) {
    std::lock_guard lock(inbox_mutex_);
    append_inbox_[topic].emplace_back(std::move(value));
  }

  /// Drains the inbox into the snapshot. Tick thread only.
  void refresh() {
    std::map<std::string, std::any> latest;
    std::map<std::string, std::vector<std::any>> appended;
    {
      std::lock_guard lock(inbox_mutex_);
      latest.swap(latest_inbox_);
      appended.swap(append_inbox_);
    }
    for (auto& [k, v] : latest) snapshot_[k] = std::move(v);
    for (const auto& k : append_topics_) lists_[k].clear();
    for (auto& [k, v] : appended) {
      append_topics_.insert(k);
      lists_[k] = std::move(v);
    }
  }

  template <class T>
  const T* get(const std::string& key) const {
    auto it = snapshot_.find(key);
    if (it == snapshot_.end()) return nullptr;
    return std::any_cast<T>(&it->second);
  }

  template <class T>
  std::optional<T> value(const std::string& key) const {
    if (const T* p = get<T>(key)) return *p;
    return std::nullopt;
  }

  /// Values appended to `topic` before the last refresh.
  template <class T>
  std::vector<T> list(const std::string& topic) const {
    std::vector<T> out;
    auto it = lists_.find(topic);
    if (it == lists_.end()) return out;
    out.reserve(it->second.size());
    for (const auto& a : it->second) {
      if (const T* p = std::any_cast<T>(&a)) out.push_back(*p);
    }
    return out;
  }

  template <class T>
  void set(const std::string& key, T value) {
    snapshot_[key] = std::any(std::move(value));
  }

  template <class T>
  T& get_or_create(const std::string& key) {
    auto it = snapshot_.find(key);
    if (it == snapshot_.end() || std::any_cast<T>(&it->second) == nullptr) {
      it = snapshot_.insert_or_assign(key, std::any(T{})).first;
    }
    return *std::any_cast<T>(&it->second);
  }

  bool contains(const std::string& key) const { return snapshot_.count(key) != 0; }

  void erase(const std::string& key) { snapshot_.erase(key); }

  void erase_prefix(const std::string& prefix) {
    auto it = snapshot_.lower_bound(prefix);
    while (it != snapshot_.end() && it->first.compare(0, prefix.size(), prefix) == 0) {
      it = snapshot_.erase(it);
    }
  }

 private:
  std::mutex inbox_mutex_;
  std::map<std::string, std::any> latest_inbox_;
  std::map<std::string, std::vector<std::any>> append_inbox_;

  std::map<std::string, std::any> snapshot_;
  std::map<std::string, std::vector<std::any>> lists_;
  std::set<std::string> append_topics_;
};

}  // namespace btloc::bt
