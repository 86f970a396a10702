#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <vector>

#include "swarmform/world.hpp"

namespace swarmform {

/// Tiebreaker level that caused a ban: neighborhood size, distance, index.
enum class BanLevel { NeighborhoodSize = 1, Distance = 2, Index = 3 };

/// Goals an agent may never select again, split by the tiebreaker that
/// banned them. Partitions only grow.
class BannedGoalSet {
public:
    void ban(GoalId goal, BanLevel level);

    bool contains(GoalId goal) const;
    const std::set<GoalId>& partition(BanLevel level) const;
    std::set<GoalId> all() const;
    std::size_t size() const;
    bool empty() const { return size() == 0; }

    /// True if every goal in every partition of `earlier` is present in the
    /// same partition here.
    bool includes(const BannedGoalSet& earlier) const;

    friend bool operator==(const BannedGoalSet&, const BannedGoalSet&) = default;

private:
    std::array<std::set<GoalId>, 3> parts_;
};

}  // namespace swarmform
