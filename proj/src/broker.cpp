#include "ibpt/broker.hpp"

#include <algorithm>
#include <stdexcept>

namespace ibpt::net {

void TopicRegistry::declare(const std::string& topic) {
    std::lock_guard lock(mutex_);
    topics_.try_emplace(topic);
}

bool TopicRegistry::exists(const std::string& topic) const {
    std::lock_guard lock(mutex_);
    return topics_.contains(topic);
}

StatusCode TopicRegistry::subscribe(const std::string& topic, const std::shared_ptr<Peer>& peer) {
    std::lock_guard lock(mutex_);
    auto it = topics_.find(topic);
    if (it == topics_.end()) return StatusCode::BadNotFound;
    auto& t = it->second;
    t.subscribers.push_back(peer);
    if (t.retained) peer->publish(topic, t.seq, *t.retained);
    return StatusCode::Good;
}

std::uint64_t TopicRegistry::publish(const std::string& topic, const Json& payload) {
    std::vector<std::shared_ptr<Peer>> alive;  // released after the lock
    std::lock_guard lock(mutex_);
    auto it = topics_.find(topic);
    if (it == topics_.end()) throw std::out_of_range("unknown topic " + topic);
    auto& t = it->second;
    const auto seq = ++t.seq;
    t.retained = payload;
    std::erase_if(t.subscribers, [&](const std::weak_ptr<Peer>& w) {
        auto p = w.lock();
        if (!p || !p->is_open()) return true;
        p->publish(topic, seq, payload);
        alive.push_back(std::move(p));
        return false;
    });
    return seq;
}

std::optional<Json> TopicRegistry::retained(const std::string& topic) const {
    std::lock_guard lock(mutex_);
    auto it = topics_.find(topic);
    if (it == topics_.end()) return std::nullopt;
    return it->second.retained;
}

std::uint64_t TopicRegistry::last_seq(const std::string& topic) const {
    std::lock_guard lock(mutex_);
    auto it = topics_.find(topic);
    return it == topics_.end() ? 0 : it->second.seq;
}

std::size_t TopicRegistry::subscriber_count(const std::string& topic) const {
    std::lock_guard lock(mutex_);
    auto it = topics_.find(topic);
    return it == topics_.end() ? 0 : it->second.subscribers.size();
}

}  // namespace ibpt::net
