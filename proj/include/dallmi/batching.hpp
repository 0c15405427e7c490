#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dallmi/text.hpp"

namespace dallmi {

// Sample indices plus, per label, the index partitions P^l (observed
// Positive) and U^l (the rest). For nested batches U^l is the outer batch
// and P^l the drawn-with-replacement positive mini-batch.
struct Batch {
    std::vector<int> indices;
    std::vector<std::vector<int>> pos;  // per label
    std::vector<std::vector<int>> unl;  // per label
};

enum class SamplerKind { Cycle, Unweighted, Nested };
const char* sampler_name(SamplerKind k);
SamplerKind sampler_from_string(const std::string& s);

class BatchStream {
public:
    virtual ~BatchStream() = default;
    // False once the epoch's batches are exhausted.
    virtual bool next(Batch& out) = 0;
    virtual std::size_t batches_per_epoch() const = 0;
};

// Visits labels round-robin, drawing one positive per visit without
// within-epoch replacement (per-label pools reshuffle when exhausted), so
// every batch holds at least one positive for every label.
std::unique_ptr<BatchStream> cycle_batches(const PUDataset& ds, std::size_t batch_size,
                                           std::uint64_t seed);

// Seeded shuffle, contiguous chunks.
std::unique_ptr<BatchStream> unweighted_batches(const PUDataset& ds, std::size_t batch_size,
                                                std::uint64_t seed);

// Outer unweighted batch as U plus per-label positive mini-batches
// (drawn with replacement) as P.
std::unique_ptr<BatchStream> nested_batches(const PUDataset& ds, std::size_t outer_size,
                                            std::size_t inner_size, std::uint64_t seed);

std::unique_ptr<BatchStream> make_sampler(SamplerKind kind, const PUDataset& ds,
                                          std::size_t batch_size, std::size_t inner_size,
                                          std::uint64_t seed);

// Partitions from observed labels: P^l = batch members positive for l.
void fill_partitions(Batch& batch, const PUDataset& ds);

}  // namespace dallmi
