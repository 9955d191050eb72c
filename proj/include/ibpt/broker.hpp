#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ibpt/peer.hpp"

namespace ibpt::net {

/// Named topics with a retained last value and a per-topic sequence counter
/// starting at 1. A subscriber first receives the retained value (if any),
/// then every later publication; all sends for one topic happen under one
/// lock, so each subscriber observes a gap-free increasing sequence.
class TopicRegistry {
public:
    void declare(const std::string& topic);
    bool exists(const std::string& topic) const;

    /// BAD_NOT_FOUND for undeclared topics.
    StatusCode subscribe(const std::string& topic, const std::shared_ptr<Peer>& peer);

    /// Returns the sequence number assigned. Throws std::out_of_range for undeclared topics.
    std::uint64_t publish(const std::string& topic, const Json& payload);

    std::optional<Json> retained(const std::string& topic) const;
    std::uint64_t last_seq(const std::string& topic) const;
    std::size_t subscriber_count(const std::string& topic) const;

    /// Holds publications on all topics while alive; used to make a group
    /// of publications on different topics contiguous in time.
    std::unique_lock<std::recursive_mutex> hold() const { return std::unique_lock(mutex_); }

private:
    struct Topic {
        std::uint64_t seq = 0;
        std::optional<Json> retained;
        std::vector<std::weak_ptr<Peer>> subscribers;
    };

    mutable std::recursive_mutex mutex_;
    std::map<std::string, Topic> topics_;
};

}  // namespace ibpt::net
