#include <algorithm>
#include <set>

#include "doctest.h"
#include "dallmi/batching.hpp"

using namespace dallmi;

namespace {

// n samples, L labels, each sample positive for exactly label (i % L)
PUDataset striped_dataset(std::size_t n, std::size_t L) {
    PUDataset ds;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = static_cast<int>(i);
        s.tokens = {2, 3, 0, 0};
        ds.samples.push_back(s);
        std::vector<int> row(L, 0);
        row[i % L] = 1;
        ds.labels.push_back(row);
    }
    return ds;
}

std::vector<Batch> drain(BatchStream& stream) {
    std::vector<Batch> out;
    Batch b;
    while (stream.next(b)) out.push_back(b);
    return out;
}

}  // namespace

TEST_CASE("cycle sampler") {
    PUDataset ds = striped_dataset(12, 3);

    SUBCASE("labels are visited round-robin") {
        auto stream = cycle_batches(ds, 4, 7);
        Batch b;
        REQUIRE(stream->next(b));
        REQUIRE(b.indices.size() == 4);
        // striped labels make membership observable: slot k came from label k % 3
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(ds.labels[b.indices[k]][k % 3] == 1);
    }
    SUBCASE("every batch holds a positive for every label") {
        auto stream = cycle_batches(ds, 5, 9);
        for (const Batch& b : drain(*stream)) {
            REQUIRE(b.pos.size() == 3);
            for (std::size_t l = 0; l < 3; ++l) {
                CHECK(!b.pos[l].empty());
                for (int idx : b.pos[l]) CHECK(ds.labels[idx][l] == 1);
                for (int idx : b.unl[l]) CHECK(ds.labels[idx][l] == 0);
            }
        }
    }
    SUBCASE("epoch covers ceil(n / batch_size) batches") {
        auto stream = cycle_batches(ds, 5, 1);
        CHECK(stream->batches_per_epoch() == 3);  // ceil(12/5)
        CHECK(drain(*stream).size() == 3);
    }
    SUBCASE("every positive of a label is seen before any repeats") {
        // label 0 owns samples {0,3,6,9}; with batch size 3 every batch's
        // first slot is a label-0 draw, so an epoch's four draws are a
        // permutation of the pool (without replacement)
        auto batches = drain(*cycle_batches(ds, 3, 13));
        REQUIRE(batches.size() == 4);
        std::set<int> draws;
        for (const Batch& b : batches) draws.insert(b.indices[0]);
        CHECK(draws == std::set<int>{0, 3, 6, 9});
    }
    SUBCASE("determinism and seed sensitivity") {
        auto a = drain(*cycle_batches(ds, 4, 5));
        auto b = drain(*cycle_batches(ds, 4, 5));
        auto c = drain(*cycle_batches(ds, 4, 6));
        REQUIRE(a.size() == b.size());
        bool all_same = true, differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            all_same = all_same && a[i].indices == b[i].indices;
            if (i < c.size() && a[i].indices != c[i].indices) differs = true;
        }
        CHECK(all_same);
        CHECK(differs);
    }
    SUBCASE("batch size below label count is rejected") {
        CHECK_THROWS_AS(cycle_batches(ds, 2, 1), std::invalid_argument);
    }
    SUBCASE("label with no positives is rejected") {
        PUDataset bad = ds;
        for (auto& row : bad.labels) row[1] = 0;
        CHECK_THROWS_AS(cycle_batches(bad, 4, 1), std::invalid_argument);
    }
}

TEST_CASE("unweighted sampler") {
    PUDataset ds = striped_dataset(10, 2);

    SUBCASE("chunks cover the dataset exactly once") {
        auto stream = unweighted_batches(ds, 4, 3);
        auto batches = drain(*stream);
        REQUIRE(batches.size() == 3);
        CHECK(batches[0].indices.size() == 4);
        CHECK(batches[1].indices.size() == 4);
        CHECK(batches[2].indices.size() == 2);
        std::set<int> seen;
        for (const Batch& b : batches) seen.insert(b.indices.begin(), b.indices.end());
        CHECK(seen.size() == 10);
    }
    SUBCASE("a one-positive label lands in exactly one batch per epoch") {
        PUDataset rare = striped_dataset(20, 2);
        for (std::size_t i = 0; i < 20; ++i) rare.labels[i] = {1, i == 7 ? 1 : 0};
        int epochs_with_split = 0;
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            auto batches = drain(*unweighted_batches(rare, 5, seed));
            int holding = 0;
            for (const Batch& b : batches)
                if (!b.pos[1].empty()) ++holding;
            CHECK(holding == 1);
            // and the other three batches are degenerate for that label
            for (const Batch& b : batches)
                if (b.pos[1].empty()) ++epochs_with_split;
        }
        CHECK(epochs_with_split == 30 * 3);
    }
    SUBCASE("shuffle varies across seeds") {
        auto a = drain(*unweighted_batches(ds, 4, 1));
        auto b = drain(*unweighted_batches(ds, 4, 2));
        CHECK(a[0].indices != b[0].indices);
    }
}

TEST_CASE("nested sampler") {
    PUDataset ds = striped_dataset(12, 3);

    SUBCASE("outer batch is U, inner positives drawn with replacement") {
        auto stream = nested_batches(ds, 4, 2, 5);
        CHECK(stream->batches_per_epoch() == 3);
        for (const Batch& b : drain(*stream)) {
            CHECK(b.indices.size() <= 4);
            REQUIRE(b.pos.size() == 3);
            for (std::size_t l = 0; l < 3; ++l) {
                CHECK(b.pos[l].size() == 2);
                for (int idx : b.pos[l]) CHECK(ds.labels[idx][l] == 1);
                // the whole outer batch plays U, positives included
                CHECK(b.unl[l] == b.indices);
            }
        }
    }
    SUBCASE("inner draws eventually repeat (with replacement)") {
        PUDataset two = striped_dataset(8, 2);
        bool repeat = false;
        for (std::uint64_t seed = 0; seed < 10 && !repeat; ++seed) {
            for (const Batch& b : drain(*nested_batches(two, 4, 3, seed)))
                for (const auto& p : b.pos) {
                    std::set<int> uniq(p.begin(), p.end());
                    if (uniq.size() < p.size()) repeat = true;
                }
        }
        CHECK(repeat);
    }
}

TEST_CASE("make_sampler and names") {
    PUDataset ds = striped_dataset(9, 3);
    for (SamplerKind k : {SamplerKind::Cycle, SamplerKind::Unweighted, SamplerKind::Nested}) {
        CHECK(sampler_from_string(sampler_name(k)) == k);
        auto stream = make_sampler(k, ds, 4, 2, 3);
        Batch b;
        CHECK(stream->next(b));
        CHECK(!b.indices.empty());
    }
    CHECK_THROWS_AS(sampler_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("fill_partitions splits by observed label") {
    PUDataset ds = striped_dataset(6, 2);
    Batch b;
    b.indices = {0, 1, 2, 5};
    fill_partitions(b, ds);
    CHECK(b.pos[0] == std::vector<int>{0, 2});
    CHECK(b.unl[0] == std::vector<int>{1, 5});
    CHECK(b.pos[1] == std::vector<int>{1, 5});
    CHECK(b.unl[1] == std::vector<int>{0, 2});
}
