#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dallmi {

// Thrown for malformed input files, dimension mismatches, bad records.
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;  // dense in [0, V)

    std::size_t size() const { return id_to_token.size(); }
    int id_of(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnk : it->second;
    }
};

struct Sample {
    int id = 0;
    std::string text;
    std::vector<int> tokens;  // exactly max_len, PAD-extended
};

enum class Domain { Source, Target };

// N samples with an N x L observed-label matrix (1 = Positive, 0 = Unlabeled)
// and, when available, the ground-truth full labels used for evaluation only.
struct PUDataset {
    std::vector<Sample> samples;
    std::vector<std::vector<int>> labels;       // observed: Positive(1)/Unlabeled(0)
    std::vector<std::vector<int>> full_labels;  // optional; empty when absent
    Domain domain = Domain::Target;

    std::size_t n() const { return samples.size(); }
    std::size_t num_labels() const { return labels.empty() ? 0 : labels[0].size(); }
    bool has_full_labels() const { return !full_labels.empty(); }

    std::vector<int> positives_of(std::size_t label) const;
};

struct SplitPair {
    PUDataset train;
    PUDataset test;
};

// Lowercased whitespace/punctuation split.
std::vector<std::string> split_words(const std::string& text);

// Frequency >= min_freq, order: frequency descending then lexicographic.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq);

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len);
std::string detokenize(const std::vector<int>& tokens, const Vocab& vocab);

// JSONL: {"text": ..., "labels": [0/1 ...] | ["name", ...]} per line, optional
// "observed" array. CSV: header text,label_0..label_{L-1}.
enum class FileFormat { Jsonl, Csv };
PUDataset load_dataset(const std::string& path, FileFormat format);
void save_dataset_jsonl(const PUDataset& ds, const std::string& path);

SplitPair split_dataset(const PUDataset& ds, double train_frac, std::uint64_t seed);

// Each positive entry of full_labels stays Positive with probability
// keep_ratio; labels left with zero positives get one original positive
// restored (the cycle sampler needs one per label).
PUDataset ablate_labels(const PUDataset& ds, double keep_ratio, std::uint64_t seed);

struct SynthSpec {
    std::size_t n = 500;
    std::size_t num_labels = 5;
    std::size_t vocab_size = 200;
    std::size_t max_len = 32;
    Domain domain = Domain::Target;
};

// Keyword-separable corpus: each label owns a disjoint keyword set, a sample
// is positive for a label iff it contains one of its keywords. The target
// domain uses synonym keyword ids disjoint from the source's.
PUDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

// Retokenizes every sample in place against the given vocab.
void retokenize(PUDataset& ds, const Vocab& vocab, std::size_t max_len);

}  // namespace dallmi
