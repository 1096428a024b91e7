#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcnet/layers.hpp"
#include "mcnet/neighbor_index.hpp"
#include "mcnet/tensor.hpp"

namespace mcnet {

// Which label a neighbor must carry to count as agreeing with point i.
enum class VoteMatchMode {
    candidate,      // the neighbor's own candidate label
    neighbor_head,  // the argmax of the neighbor's neighborhood head
};

std::string to_string(VoteMatchMode mode);
VoteMatchMode vote_match_mode_from_string(const std::string& name);

struct VoteInputs {
    NDArray logits_point;  // [N,C]
    NDArray logits_nei;    // [N,C]
    NeighborIndex neighbors;
    VoteMatchMode match_mode = VoteMatchMode::candidate;
};

struct VoteResult {
    std::vector<int> final_labels;
    std::vector<int> candidate_labels;
    std::vector<std::size_t> support_counts;  // agreeing neighbor slots, self included
};

// Mean of the features over each neighborhood, then a pointwise FC.
NDArray head_nei(const NDArray& features, const NeighborIndex& neighbors, const LinearParams& fc);

VoteResult vote(const VoteInputs& inputs);

// Row-wise argmax, lowest index on ties.
std::vector<int> argmax_baseline(const NDArray& logits_point);

}  // namespace mcnet
