// CoNLL-U ingestion and serialization, dependency-tree validation, vocabulary
// construction, and rule-driven tree re-linearization for synthetic
// target-language corpora.

#ifndef XLING_TREEBANK_HPP
#define XLING_TREEBANK_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "xling/rng.hpp"

namespace xling {

struct Token {
    std::size_t id = 0;        // 1-based position
    std::string form;
    std::string upos;
    std::size_t head = 0;      // 0 = virtual root
    std::string deprel;

    bool operator==(const Token& o) const {
        return id == o.id && form == o.form && upos == o.upos && head == o.head &&
               deprel == o.deprel;
    }
};

struct Sentence {
    std::vector<Token> tokens;  // ids 1..size()
    std::string language;

    std::size_t size() const { return tokens.size(); }
    // language is presentation metadata, not content
    bool operator==(const Sentence& o) const { return tokens == o.tokens; }
};

struct Treebank {
    std::vector<Sentence> sentences;
    std::string language;

    std::size_t size() const { return sentences.size(); }
    bool operator==(const Treebank& o) const { return sentences == o.sentences; }
};

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

// Empty result iff the sentence is a well-formed tree: consecutive ids,
// heads in range, exactly one root, no cycles.
inline std::vector<std::string> validate_tree(const Sentence& s) {
    std::vector<std::string> issues;
    const std::size_t n = s.size();
    if (n == 0) {
        issues.push_back("empty sentence");
        return issues;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (s.tokens[i].id != i + 1) {
            issues.push_back("token ids not consecutive at position " + std::to_string(i + 1));
            return issues;
        }
    }
    bool heads_ok = true;
    std::size_t roots = 0;
    for (const Token& t : s.tokens) {
        if (t.head > n) {
            issues.push_back("token " + std::to_string(t.id) + ": head " +
                             std::to_string(t.head) + " out of range [0, " + std::to_string(n) +
                             "]");
            heads_ok = false;
        } else if (t.head == t.id) {
            issues.push_back("token " + std::to_string(t.id) + ": head points to itself");
            heads_ok = false;
        }
        if (t.head == 0) ++roots;
    }
    if (roots == 0) issues.push_back("no root (no token with head 0)");
    if (roots > 1) issues.push_back("multiple roots (" + std::to_string(roots) + " tokens with head 0)");
    if (!heads_ok) return issues;
    // cycle scan: follow head chains, coloring nodes (0 unseen, 1 on current
    // chain, 2 settled); a chain that meets itself is a cycle
    std::vector<int> color(n + 1, 0);
    color[0] = 2;
    for (std::size_t start = 1; start <= n; ++start) {
        if (color[start] != 0) continue;
        std::vector<std::size_t> chain;
        std::size_t v = start;
        while (color[v] == 0) {
            color[v] = 1;
            chain.push_back(v);
            v = s.tokens[v - 1].head;
        }
        if (color[v] == 1) {
            std::string ids;
            std::size_t w = v;
            do {
                if (!ids.empty()) ids += ", ";
                ids += std::to_string(w);
                w = s.tokens[w - 1].head;
            } while (w != v);
            issues.push_back("cycle at ids " + ids);
        }
        for (std::size_t u : chain) color[u] = 2;
    }
    return issues;
}

// ---------------------------------------------------------------------------
// CoNLL-U parsing / writing
// ---------------------------------------------------------------------------

namespace detail {

inline bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

// "i-j" multiword range or "i.j" empty node
inline bool is_skippable_id(const std::string& s) {
    for (char sep : {'-', '.'}) {
        const auto pos = s.find(sep);
        if (pos != std::string::npos && pos > 0 && pos + 1 < s.size() &&
            all_digits(s.substr(0, pos)) && all_digits(s.substr(pos + 1)))
            return true;
    }
    return false;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cols.push_back(line.substr(start));
            return cols;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

[[noreturn]] inline void parse_fail(std::size_t line_no, const std::string& msg) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace detail

inline Treebank parse_conllu(const std::string& text) {
    Treebank tb;
    Sentence cur;
    std::vector<std::size_t> token_lines;  // source line of each kept token
    std::size_t sentence_start_line = 0;

    auto flush = [&](std::size_t line_no) {
        if (cur.tokens.empty()) return;
        for (std::size_t i = 0; i < cur.tokens.size(); ++i)
            if (cur.tokens[i].id != i + 1)
                detail::parse_fail(token_lines[i],
                                   "token id " + std::to_string(cur.tokens[i].id) +
                                       " breaks the 1..n sequence (expected " +
                                       std::to_string(i + 1) + ")");
        for (std::size_t i = 0; i < cur.tokens.size(); ++i)
            if (cur.tokens[i].head > cur.tokens.size())
                detail::parse_fail(token_lines[i],
                                   "head " + std::to_string(cur.tokens[i].head) +
                                       " out of range for a " +
                                       std::to_string(cur.tokens.size()) + "-token sentence");
        const auto issues = validate_tree(cur);
        if (!issues.empty())
            detail::parse_fail(sentence_start_line,
                               "sentence is not a valid tree: " + issues.front());
        tb.sentences.push_back(std::move(cur));
        cur = Sentence{};
        token_lines.clear();
        (void)line_no;
    };

    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            flush(line_no);
            continue;
        }
        if (line[0] == '#') continue;
        const auto cols = detail::split_tabs(line);
        if (cols.size() != 10)
            detail::parse_fail(line_no, "expected 10 tab-separated columns, got " +
                                            std::to_string(cols.size()));
        if (detail::is_skippable_id(cols[0])) continue;  // ranges and empty nodes
        if (!detail::all_digits(cols[0]))
            detail::parse_fail(line_no, "bad token id '" + cols[0] + "'");
        if (!detail::all_digits(cols[6]))
            detail::parse_fail(line_no, "non-integer head '" + cols[6] + "'");
        Token t;
        t.id = std::stoull(cols[0]);
        if (t.id == 0) detail::parse_fail(line_no, "token id must be >= 1");
        t.form = cols[1];
        t.upos = cols[3];
        t.head = std::stoull(cols[6]);
        t.deprel = cols[7];
        if (cur.tokens.empty()) sentence_start_line = line_no;
        cur.tokens.push_back(std::move(t));
        token_lines.push_back(line_no);
    }
    flush(line_no + 1);
    return tb;
}

inline std::string write_conllu(const Treebank& tb) {
    std::string out;
    for (const Sentence& s : tb.sentences) {
        for (const Token& t : s.tokens) {
            out += std::to_string(t.id);
            out += '\t';
            out += t.form;
            out += "\t_\t";
            out += t.upos;
            out += "\t_\t_\t";
            out += std::to_string(t.head);
            out += '\t';
            out += t.deprel;
            out += "\t_\t_\n";
        }
        out += '\n';
    }
    return out;
}

inline Treebank parse_conllu_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    try {
        return parse_conllu(buf.str());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline void write_conllu_file(const std::string& path, const Treebank& tb) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << write_conllu(tb);
    if (!os) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// vocabulary
// ---------------------------------------------------------------------------

// Dense string→index maps for forms, POS tags, and relation labels. Indices
// 0..2 are reserved in every map; items are numbered in first-seen corpus
// order, so the same corpus always yields the same vocabulary.
class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kRoot = 2;
    static constexpr std::size_t kReserved = 3;

    std::size_t word(const std::string& f) const { return find(word_, f); }
    std::size_t upos(const std::string& t) const { return find(upos_, t); }
    std::size_t deprel(const std::string& r) const { return find(deprel_, r); }

    std::size_t word_count() const { return word_names_.size(); }
    std::size_t upos_count() const { return upos_names_.size(); }
    std::size_t deprel_count() const { return deprel_names_.size(); }

    const std::string& deprel_name(std::size_t i) const { return deprel_names_.at(i); }
    const std::string& upos_name(std::size_t i) const { return upos_names_.at(i); }
    const std::vector<std::string>& word_names() const { return word_names_; }
    const std::vector<std::string>& upos_names() const { return upos_names_; }
    const std::vector<std::string>& deprel_names() const { return deprel_names_; }

    static Vocab build(const Treebank& tb, std::size_t min_freq = 1) {
        if (tb.sentences.empty())
            throw std::invalid_argument("build_vocab: empty treebank");
        std::map<std::string, std::size_t> freq;
        for (const Sentence& s : tb.sentences)
            for (const Token& t : s.tokens) ++freq[t.form];
        Vocab v;
        for (const Sentence& s : tb.sentences)
            for (const Token& t : s.tokens) {
                if (freq[t.form] >= min_freq) v.add(v.word_, v.word_names_, t.form);
                v.add(v.upos_, v.upos_names_, t.upos);
                v.add(v.deprel_, v.deprel_names_, t.deprel);
            }
        return v;
    }

    // Rebuild from index-ordered name lists (reserved slots included), as
    // stored in checkpoints.
    static Vocab from_names(std::vector<std::string> words, std::vector<std::string> upos,
                            std::vector<std::string> deprel) {
        Vocab v;
        v.word_names_ = std::move(words);
        v.upos_names_ = std::move(upos);
        v.deprel_names_ = std::move(deprel);
        auto index = [](const std::vector<std::string>& names,
                        std::map<std::string, std::size_t>& m) {
            for (std::size_t i = kReserved; i < names.size(); ++i) m[names[i]] = i;
        };
        index(v.word_names_, v.word_);
        index(v.upos_names_, v.upos_);
        index(v.deprel_names_, v.deprel_);
        return v;
    }

private:
    Vocab() {
        for (auto* names : {&word_names_, &upos_names_, &deprel_names_})
            *names = {"<pad>", "<unk>", "<root>"};
    }

    static std::size_t find(const std::map<std::string, std::size_t>& m, const std::string& k) {
        auto it = m.find(k);
        return it == m.end() ? kUnk : it->second;
    }

    void add(std::map<std::string, std::size_t>& m, std::vector<std::string>& names,
             const std::string& k) {
        if (m.emplace(k, names.size()).second) names.push_back(k);
    }

    std::map<std::string, std::size_t> word_, upos_, deprel_;
    std::vector<std::string> word_names_, upos_names_, deprel_names_;
};

inline Vocab build_vocab(const Treebank& tb, std::size_t min_freq = 1) {
    return Vocab::build(tb, min_freq);
}

// ---------------------------------------------------------------------------
// direction rules and synthetic reordering
// ---------------------------------------------------------------------------

// (dependent upos, head upos, relation label)
using TripleKey = std::tuple<std::string, std::string, std::string>;

inline std::string triple_str(const TripleKey& k) {
    return std::get<0>(k) + " " + std::get<1>(k) + " " + std::get<2>(k);
}

// Probability that a dependent of a given triple is placed left of its head.
struct RuleSet {
    std::map<TripleKey, double> left_prob;
    double fallback = 0.5;

    double lookup(const std::string& dep_upos, const std::string& head_upos,
                  const std::string& deprel) const {
        auto it = left_prob.find(TripleKey{dep_upos, head_upos, deprel});
        return it == left_prob.end() ? fallback : it->second;
    }
};

// Text format: one "DEPUPOS HEADUPOS DEPREL LEFTPROB" per line, blank lines
// and "#" comments ignored; "* * * P" sets the fallback probability.
inline RuleSet parse_rules(const std::string& text) {
    RuleSet rs;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string dep, head, rel, prob;
        if (!(ls >> dep)) continue;  // blank
        if (!(ls >> head >> rel >> prob))
            detail::parse_fail(line_no, "expected 'DEPUPOS HEADUPOS DEPREL LEFTPROB'");
        std::string extra;
        if (ls >> extra) detail::parse_fail(line_no, "trailing content '" + extra + "'");
        double p = 0.0;
        try {
            std::size_t used = 0;
            p = std::stod(prob, &used);
            if (used != prob.size()) throw std::invalid_argument(prob);
        } catch (const std::exception&) {
            detail::parse_fail(line_no, "bad probability '" + prob + "'");
        }
        if (p < 0.0 || p > 1.0)
            detail::parse_fail(line_no, "probability " + prob + " outside [0,1]");
        if (dep == "*" && head == "*" && rel == "*")
            rs.fallback = p;
        else
            rs.left_prob[TripleKey{dep, head, rel}] = p;
    }
    return rs;
}

inline RuleSet parse_rules_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    try {
        return parse_rules(buf.str());
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

inline std::string write_rules(const RuleSet& rs) {
    std::ostringstream os;
    os << "* * * " << rs.fallback << "\n";
    for (const auto& [k, p] : rs.left_prob) os << triple_str(k) << " " << p << "\n";
    return os.str();
}

// Re-linearizes a sentence by sampling, for every dependent, whether it sits
// left or right of its head; same-side siblings keep their original relative
// order and subtrees stay contiguous, so the output is projective. Tree
// topology (heads re-indexed to new positions) and all token attributes are
// preserved. Deterministic in the seed.
inline Sentence reorder_synthetic(const Sentence& s, const RuleSet& rules, std::uint64_t seed) {
    const std::size_t n = s.size();
    const auto issues = validate_tree(s);
    if (!issues.empty())
        throw std::invalid_argument("reorder_synthetic: invalid tree: " + issues.front());

    // direction per dependent, sampled in id order so the draw sequence does
    // not depend on tree shape
    Rng rng(seed);
    std::vector<bool> left(n + 1, false);
    for (std::size_t i = 1; i <= n; ++i) {
        const Token& t = s.tokens[i - 1];
        if (t.head == 0) continue;  // root attachment has no side
        const Token& h = s.tokens[t.head - 1];
        left[i] = rng.bernoulli(rules.lookup(t.upos, h.upos, t.deprel));
    }

    std::vector<std::vector<std::size_t>> kids(n + 1);
    for (std::size_t i = 1; i <= n; ++i) kids[s.tokens[i - 1].head].push_back(i);

    std::vector<std::size_t> order;  // old ids in new surface order
    order.reserve(n);
    auto linearize = [&](auto&& self, std::size_t node) -> void {
        for (std::size_t c : kids[node])
            if (left[c]) self(self, c);
        order.push_back(node);
        for (std::size_t c : kids[node])
            if (!left[c]) self(self, c);
    };
    for (std::size_t top : kids[0]) linearize(linearize, top);

    std::vector<std::size_t> new_pos(n + 1, 0);  // old id -> new id
    for (std::size_t i = 0; i < n; ++i) new_pos[order[i]] = i + 1;

    Sentence out;
    out.language = s.language;
    out.tokens.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Token& t = s.tokens[order[i] - 1];
        Token nt = t;
        nt.id = i + 1;
        nt.head = t.head == 0 ? 0 : new_pos[t.head];
        out.tokens.push_back(std::move(nt));
    }
    return out;
}

// Whole-treebank reordering; each sentence draws from its own stream derived
// from the master seed, so per-sentence results are independent of corpus
// order edits elsewhere.
inline Treebank reorder_synthetic(const Treebank& tb, const RuleSet& rules, std::uint64_t seed) {
    Treebank out;
    out.language = tb.language.empty() ? "synthetic" : tb.language + "-synthetic";
    out.sentences.reserve(tb.size());
    for (std::size_t i = 0; i < tb.size(); ++i)
        out.sentences.push_back(
            reorder_synthetic(tb.sentences[i], rules, derive_seed(seed, std::to_string(i))));
    return out;
}

}  // namespace xling

#endif  // XLING_TREEBANK_HPP
