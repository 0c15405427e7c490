#include "dallmi/batching.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

namespace dallmi {

const char* sampler_name(SamplerKind k) {
    switch (k) {
        case SamplerKind::Cycle: return "cycle";
        case SamplerKind::Unweighted: return "unweighted";
        case SamplerKind::Nested: return "nested";
    }
    return "?";
}

SamplerKind sampler_from_string(const std::string& s) {
    if (s == "cycle") return SamplerKind::Cycle;
    if (s == "unweighted") return SamplerKind::Unweighted;
    if (s == "nested") return SamplerKind::Nested;
    throw std::invalid_argument("unknown sampler: " + s);
}

void fill_partitions(Batch& batch, const PUDataset& ds) {
    std::size_t L = ds.num_labels();
    batch.pos.assign(L, {});
    batch.unl.assign(L, {});
    for (std::size_t l = 0; l < L; ++l)
        for (int idx : batch.indices) {
            if (ds.labels[static_cast<std::size_t>(idx)][l] == 1)
                batch.pos[l].push_back(idx);
            else
                batch.unl[l].push_back(idx);
        }
}

namespace {

class CycleStream final : public BatchStream {
public:
    CycleStream(const PUDataset& ds, std::size_t batch_size, std::uint64_t seed)
        : ds_(&ds), batch_size_(batch_size), rng_(seed) {
        std::size_t L = ds.num_labels();
        if (batch_size < L)
            throw std::invalid_argument(
                "cycle_batches: batch_size " + std::to_string(batch_size) +
                " < label count " + std::to_string(L) +
                "; the cycle sampler needs one slot per label, raise batch_size");
        pools_.resize(L);
        cursors_.assign(L, 0);
        for (std::size_t l = 0; l < L; ++l) {
            pools_[l] = ds.positives_of(l);
            if (pools_[l].empty())
                throw std::invalid_argument("cycle_batches: label " + std::to_string(l) +
                                            " has no positive samples");
            std::shuffle(pools_[l].begin(), pools_[l].end(), rng_);
        }
        total_ = (ds.n() + batch_size - 1) / batch_size;
    }

    std::size_t batches_per_epoch() const override { return total_; }

    bool next(Batch& out) override {
        if (emitted_ == total_) return false;
        out.indices.clear();
        std::set<int> in_batch;
        std::size_t L = pools_.size();
        std::size_t label = 0;
        while (out.indices.size() < batch_size_) {
            int pickd = draw(label);
            for (int retry = 0; retry < 10 && in_batch.count(pickd); ++retry)
                pickd = draw(label);
            in_batch.insert(pickd);
            out.indices.push_back(pickd);
            label = (label + 1) % L;
        }
        fill_partitions(out, *ds_);
        ++emitted_;
        return true;
    }

private:
    int draw(std::size_t label) {
        auto& pool = pools_[label];
        if (cursors_[label] == pool.size()) {
            std::shuffle(pool.begin(), pool.end(), rng_);
            cursors_[label] = 0;
        }
        return pool[cursors_[label]++];
    }

    const PUDataset* ds_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
    std::vector<std::vector<int>> pools_;
    std::vector<std::size_t> cursors_;
    std::size_t total_ = 0;
    std::size_t emitted_ = 0;
};

class UnweightedStream final : public BatchStream {
public:
    UnweightedStream(const PUDataset& ds, std::size_t batch_size, std::uint64_t seed)
        : ds_(&ds), batch_size_(batch_size) {
        if (ds.n() == 0) throw std::invalid_argument("unweighted_batches: empty dataset");
        order_.resize(ds.n());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
        std::mt19937_64 rng(seed);
        std::shuffle(order_.begin(), order_.end(), rng);
    }

    std::size_t batches_per_epoch() const override {
        return (order_.size() + batch_size_ - 1) / batch_size_;
    }

    bool next(Batch& out) override {
        if (pos_ == order_.size()) return false;
        std::size_t end = std::min(pos_ + batch_size_, order_.size());
        out.indices.assign(order_.begin() + static_cast<long>(pos_),
                           order_.begin() + static_cast<long>(end));
        pos_ = end;
        fill_partitions(out, *ds_);
        return true;
    }

private:
    const PUDataset* ds_;
    std::size_t batch_size_;
    std::vector<int> order_;
    std::size_t pos_ = 0;
};

class NestedStream final : public BatchStream {
public:
    NestedStream(const PUDataset& ds, std::size_t outer_size, std::size_t inner_size,
                 std::uint64_t seed)
        : outer_(ds, outer_size, seed), ds_(&ds), inner_size_(inner_size), rng_(seed + 1) {
        if (inner_size < 1) throw std::invalid_argument("nested_batches: inner_size must be >= 1");
        std::size_t L = ds.num_labels();
        positives_.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            positives_[l] = ds.positives_of(l);
            if (positives_[l].empty())
                throw std::invalid_argument("nested_batches: label " + std::to_string(l) +
                                            " has no positive samples");
        }
    }

    std::size_t batches_per_epoch() const override { return outer_.batches_per_epoch(); }

    bool next(Batch& out) override {
        Batch outer;
        if (!outer_.next(outer)) return false;
        std::size_t L = positives_.size();
        out.indices = outer.indices;
        out.pos.assign(L, {});
        out.unl.assign(L, {});
        for (std::size_t l = 0; l < L; ++l) {
            out.unl[l] = outer.indices;  // whole outer batch plays U
            std::uniform_int_distribution<std::size_t> pick(0, positives_[l].size() - 1);
            for (std::size_t k = 0; k < inner_size_; ++k)
                out.pos[l].push_back(positives_[l][pick(rng_)]);
        }
        return true;
    }

private:
    UnweightedStream outer_;
    const PUDataset* ds_;
    std::size_t inner_size_;
    std::mt19937_64 rng_;
    std::vector<std::vector<int>> positives_;
};

}  // namespace

std::unique_ptr<BatchStream> cycle_batches(const PUDataset& ds, std::size_t batch_size,
                                           std::uint64_t seed) {
    return std::make_unique<CycleStream>(ds, batch_size, seed);
}

std::unique_ptr<BatchStream> unweighted_batches(const PUDataset& ds, std::size_t batch_size,
                                                std::uint64_t seed) {
    return std::make_unique<UnweightedStream>(ds, batch_size, seed);
}

std::unique_ptr<BatchStream> nested_batches(const PUDataset& ds, std::size_t outer_size,
                                            std::size_t inner_size, std::uint64_t seed) {
    return std::make_unique<NestedStream>(ds, outer_size, inner_size, seed);
}

std::unique_ptr<BatchStream> make_sampler(SamplerKind kind, const PUDataset& ds,
                                          std::size_t batch_size, std::size_t inner_size,
                                          std::uint64_t seed) {
    switch (kind) {
        case SamplerKind::Cycle: return cycle_batches(ds, batch_size, seed);
        case SamplerKind::Unweighted: return unweighted_batches(ds, batch_size, seed);
        case SamplerKind::Nested: return nested_batches(ds, batch_size, inner_size, seed);
    }
    throw std::logic_error("make_sampler: bad kind");
}

}  // namespace dallmi
