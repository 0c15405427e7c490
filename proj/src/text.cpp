#include "dallmi/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dallmi {

using nlohmann::json;

std::vector<int> PUDataset::positives_of(std::size_t label) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i][label] == 1) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& text : corpus)
        for (auto& w : split_words(text)) ++freq[w];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, f] : freq)
        if (f >= min_freq) kept.emplace_back(tok, f);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    v.id_to_token = {"<pad>", "<unk>"};
    for (auto& [tok, f] : kept) v.id_to_token.push_back(tok);
    for (std::size_t i = 0; i < v.id_to_token.size(); ++i)
        v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
    return v;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 1) throw DataError("tokenize: max_len must be >= 1");
    std::vector<int> ids;
    ids.reserve(max_len);
    for (const auto& w : split_words(text)) {
        if (ids.size() == max_len) break;
        ids.push_back(vocab.id_of(w));
    }
    ids.resize(max_len, Vocab::kPad);
    return ids;
}

std::string detokenize(const std::vector<int>& tokens, const Vocab& vocab) {
    std::string out;
    for (int id : tokens) {
        if (id == Vocab::kPad) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.id_to_token.at(static_cast<std::size_t>(id));
    }
    return out;
}

namespace {

std::vector<int> labels_from_json(const json& rec, const std::string& key,
                                  const std::vector<std::string>& name_header,
                                  std::size_t line_no) {
    const json& arr = rec.at(key);
    if (!arr.is_array())
        throw DataError("line " + std::to_string(line_no) + ": '" + key + "' must be an array");
    std::vector<int> row;
    // an empty list in a name-labelled file means "no labels for this record"
    if (arr.empty() && !name_header.empty()) return std::vector<int>(name_header.size(), 0);
    if (!arr.empty() && arr[0].is_string()) {
        row.assign(name_header.size(), 0);
        for (const auto& item : arr) {
            auto it = std::find(name_header.begin(), name_header.end(),
                                item.get<std::string>());
            if (it == name_header.end())
                throw DataError("line " + std::to_string(line_no) + ": unknown label name '" +
                                item.get<std::string>() + "'");
            row[static_cast<std::size_t>(it - name_header.begin())] = 1;
        }
        return row;
    }
    for (const auto& item : arr) {
        int v = item.get<int>();
        if (v != 0 && v != 1)
            throw DataError("line " + std::to_string(line_no) + ": label value not 0/1");
        row.push_back(v);
    }
    return row;
}

PUDataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);

    // First pass: collect label names (sorted) so the name-list form resolves
    // to a stable column order.
    std::vector<json> records;
    std::set<std::string> names;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!rec.contains("text") || !rec["text"].is_string())
            throw DataError("line " + std::to_string(line_no) + ": missing 'text'");
        if (!rec.contains("labels"))
            throw DataError("line " + std::to_string(line_no) + ": missing 'labels'");
        if (rec["labels"].is_array() && !rec["labels"].empty() && rec["labels"][0].is_string())
            for (const auto& s : rec["labels"]) names.insert(s.get<std::string>());
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw DataError("load_dataset: no records in " + path);
    std::vector<std::string> header(names.begin(), names.end());

    PUDataset ds;
    std::size_t arity = 0;
    line_no = 0;
    for (const auto& rec : records) {
        ++line_no;
        Sample s;
        s.id = static_cast<int>(ds.samples.size());
        s.text = rec["text"].get<std::string>();
        std::vector<int> full = labels_from_json(rec, "labels", header, line_no);
        if (arity == 0) arity = full.size();
        if (full.size() != arity)
            throw DataError("line " + std::to_string(line_no) + ": label arity " +
                            std::to_string(full.size()) + " != " + std::to_string(arity));
        std::vector<int> observed = full;
        if (rec.contains("observed")) {
            observed = labels_from_json(rec, "observed", header, line_no);
            if (observed.size() != arity)
                throw DataError("line " + std::to_string(line_no) + ": observed arity mismatch");
        }
        ds.samples.push_back(std::move(s));
        ds.full_labels.push_back(std::move(full));
        ds.labels.push_back(std::move(observed));
    }
    return ds;
}

// Minimal CSV field splitter with double-quote support.
std::vector<std::string> csv_fields(const std::string& line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

PUDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("load_dataset: empty file " + path);
    auto header = csv_fields(line, 1);
    if (header.empty() || header[0] != "text")
        throw DataError("load_dataset: CSV header must start with 'text'");
    std::size_t arity = header.size() - 1;
    if (arity == 0) throw DataError("load_dataset: CSV header has no label columns");

    PUDataset ds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv_fields(line, line_no);
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        Sample s;
        s.id = static_cast<int>(ds.samples.size());
        s.text = fields[0];
        std::vector<int> full;
        for (std::size_t j = 1; j < fields.size(); ++j) {
            if (fields[j] != "0" && fields[j] != "1")
                throw DataError("line " + std::to_string(line_no) + ": label value not 0/1: '" +
                                fields[j] + "'");
            full.push_back(fields[j] == "1" ? 1 : 0);
        }
        ds.samples.push_back(std::move(s));
        ds.labels.push_back(full);
        ds.full_labels.push_back(std::move(full));
    }
    if (ds.samples.empty()) throw DataError("load_dataset: no records in " + path);
    return ds;
}

}  // namespace

PUDataset load_dataset(const std::string& path, FileFormat format) {
    return format == FileFormat::Jsonl ? load_jsonl(path) : load_csv(path);
}

void save_dataset_jsonl(const PUDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_dataset: cannot write " + path);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        json rec;
        rec["text"] = ds.samples[i].text;
        rec["labels"] = ds.has_full_labels() ? ds.full_labels[i] : ds.labels[i];
        rec["observed"] = ds.labels[i];
        out << rec.dump() << "\n";
    }
}

SplitPair split_dataset(const PUDataset& ds, double train_frac, std::uint64_t seed) {
    if (ds.n() < 5)
        throw DataError("split_dataset: need at least 5 samples, got " + std::to_string(ds.n()));
    std::vector<std::size_t> order(ds.n());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    auto n_train = static_cast<std::size_t>(
        std::llround(train_frac * static_cast<double>(ds.n())));
    n_train = std::min(std::max<std::size_t>(n_train, 1), ds.n() - 1);

    SplitPair out;
    out.train.domain = out.test.domain = ds.domain;
    for (std::size_t k = 0; k < ds.n(); ++k) {
        PUDataset& dst = k < n_train ? out.train : out.test;
        std::size_t i = order[k];
        dst.samples.push_back(ds.samples[i]);
        dst.labels.push_back(ds.labels[i]);
        if (ds.has_full_labels()) dst.full_labels.push_back(ds.full_labels[i]);
    }
    return out;
}

PUDataset ablate_labels(const PUDataset& ds, double keep_ratio, std::uint64_t seed) {
    if (!(keep_ratio > 0.0 && keep_ratio <= 1.0))
        throw DataError("ablate_labels: keep_ratio must be in (0,1], got " +
                        std::to_string(keep_ratio));
    if (!ds.has_full_labels())
        throw DataError("ablate_labels: dataset has no full labels");

    PUDataset out = ds;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::size_t L = ds.num_labels();
    for (std::size_t i = 0; i < out.n(); ++i)
        for (std::size_t l = 0; l < L; ++l)
            out.labels[i][l] =
                (ds.full_labels[i][l] == 1 && unif(rng) < keep_ratio) ? 1 : 0;

    // Restore one original positive for any label left empty.
    for (std::size_t l = 0; l < L; ++l) {
        bool any = false;
        for (std::size_t i = 0; i < out.n(); ++i)
            if (out.labels[i][l] == 1) { any = true; break; }
        if (any) continue;
        std::vector<std::size_t> originals;
        for (std::size_t i = 0; i < out.n(); ++i)
            if (ds.full_labels[i][l] == 1) originals.push_back(i);
        if (originals.empty())
            throw DataError("ablate_labels: label " + std::to_string(l) +
                            " has no positives to restore");
        std::uniform_int_distribution<std::size_t> pickr(0, originals.size() - 1);
        out.labels[originals[pickr(rng)]][l] = 1;
    }
    return out;
}

PUDataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.num_labels < 2) throw DataError("synth_dataset: need L >= 2");
    if (spec.n < 50) throw DataError("synth_dataset: need n >= 50");
    constexpr std::size_t kKeywordsPerLabel = 3;
    std::size_t keyword_span = 2 * spec.num_labels * kKeywordsPerLabel;
    if (spec.vocab_size < keyword_span + 20)
        throw DataError("synth_dataset: vocab_size " + std::to_string(spec.vocab_size) +
                        " too small for " + std::to_string(spec.num_labels) +
                        " disjoint keyword sets (need >= " +
                        std::to_string(keyword_span + 20) + ")");

    auto word = [](std::size_t id) {
        std::ostringstream s;
        s << "w" << id;
        return s.str();
    };
    // Source keywords occupy [0, L*K), target synonyms [L*K, 2*L*K).
    std::size_t base = spec.domain == Domain::Source ? 0 : spec.num_labels * kKeywordsPerLabel;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_nlabels(1, 3);
    // Long-tail label marginals: each label is roughly half as frequent as the
    // previous one, like real multi-label corpora.
    std::vector<double> cum(spec.num_labels);
    double acc = 0.0;
    for (std::size_t l = 0; l < spec.num_labels; ++l) {
        acc += std::pow(0.5, static_cast<double>(l));
        cum[l] = acc;
    }
    std::uniform_real_distribution<double> unit(0.0, acc);
    auto pick_label = [&](std::mt19937_64& g) {
        double u = unit(g);
        std::size_t l = 0;
        while (l + 1 < cum.size() && u > cum[l]) ++l;
        return l;
    };
    std::uniform_int_distribution<std::size_t> pick_kw(0, kKeywordsPerLabel - 1);
    std::uniform_int_distribution<std::size_t> pick_noise(keyword_span, spec.vocab_size - 1);
    std::size_t min_len = std::min<std::size_t>(8, spec.max_len);
    std::uniform_int_distribution<std::size_t> pick_len(min_len, spec.max_len);

    PUDataset ds;
    ds.domain = spec.domain;
    for (std::size_t i = 0; i < spec.n; ++i) {
        std::set<std::size_t> chosen;
        if (i < spec.num_labels) chosen.insert(i);  // every label gets early positives
        std::size_t want = std::min(std::max<std::size_t>(pick_nlabels(rng), chosen.size()),
                                    spec.num_labels);
        while (chosen.size() < want) chosen.insert(pick_label(rng));

        std::vector<std::size_t> word_ids;
        for (std::size_t l : chosen) {
            std::size_t reps = 2 + (rng() & 1u);
            for (std::size_t r = 0; r < reps; ++r)
                word_ids.push_back(base + l * kKeywordsPerLabel + pick_kw(rng));
        }
        std::size_t len = std::max(pick_len(rng), word_ids.size());
        while (word_ids.size() < len) word_ids.push_back(pick_noise(rng));
        std::shuffle(word_ids.begin(), word_ids.end(), rng);

        Sample s;
        s.id = static_cast<int>(i);
        for (std::size_t w : word_ids) {
            if (!s.text.empty()) s.text.push_back(' ');
            s.text += word(w);
        }
        ds.samples.push_back(std::move(s));

        std::vector<int> row(spec.num_labels, 0);
        for (std::size_t l : chosen) row[l] = 1;
        ds.labels.push_back(row);
        ds.full_labels.push_back(std::move(row));
    }
    return ds;
}

void retokenize(PUDataset& ds, const Vocab& vocab, std::size_t max_len) {
    for (auto& s : ds.samples) s.tokens = tokenize(s.text, vocab, max_len);
}

}  // namespace dallmi
