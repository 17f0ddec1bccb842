// Word-order typology: per-triple left-direction frequencies, the normalized
// Manhattan distance between feature vectors, model-predicted order
// frequencies, and Pearson correlation with a t-distributed p-value.

#ifndef XLING_TYPOLOGY_HPP
#define XLING_TYPOLOGY_HPP

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xling/order_predictor.hpp"
#include "xling/teacher.hpp"
#include "xling/treebank.hpp"

namespace xling {

// An aligned feature vector: left-direction relative frequency per triple,
// with the observation count behind each entry. Zero-support triples sit at
// 0.5 (maximal uncertainty) so absent constructions add no distance.
struct TypologyVector {
    std::vector<TripleKey> keys;
    std::vector<double> left_freq;
    std::vector<std::size_t> support;

    std::size_t size() const { return keys.size(); }
};

// gold-edge triple counts; root and degenerate self attachments don't count
inline std::map<TripleKey, std::size_t> count_triples(const Treebank& tb) {
    std::map<TripleKey, std::size_t> counts;
    for (const Sentence& s : tb.sentences)
        for (const OrderInstance& oi : extract_instances(s))
            ++counts[TripleKey{oi.dep_upos, oi.head_upos,
                               s.tokens[oi.dep - 1].deprel}];
    return counts;
}

// The k most frequent triples across all given treebanks, most frequent
// first and ties in lexicographic order. Fewer than k distinct triples in
// the data simply yields them all.
inline std::vector<TripleKey> select_triples(const std::vector<Treebank>& tbs, std::size_t k) {
    if (tbs.empty()) throw std::invalid_argument("select_triples: no treebanks");
    if (k == 0) throw std::invalid_argument("select_triples: k must be positive");
    std::map<TripleKey, std::size_t> counts;
    for (const Treebank& tb : tbs)
        for (const auto& [key, n] : count_triples(tb)) counts[key] += n;

    std::vector<std::pair<TripleKey, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<TripleKey> out;
    out.reserve(std::min(k, ranked.size()));
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].first);
    return out;
}

inline std::vector<TripleKey> select_triples(const Treebank& tb, std::size_t k) {
    return select_triples(std::vector<Treebank>{tb}, k);
}

// observed left-direction frequency of each requested triple under the
// treebank's current heads
inline TypologyVector order_feature(const Treebank& tb, const std::vector<TripleKey>& keys) {
    std::map<TripleKey, std::pair<std::size_t, std::size_t>> tally;  // left, total
    for (const Sentence& s : tb.sentences)
        for (const OrderInstance& oi : extract_instances(s)) {
            auto& [left, total] = tally[TripleKey{oi.dep_upos, oi.head_upos,
                                                  s.tokens[oi.dep - 1].deprel}];
            left += oi.label == 0;
            ++total;
        }
    TypologyVector out;
    out.keys = keys;
    for (const TripleKey& key : keys) {
        auto it = tally.find(key);
        if (it == tally.end() || it->second.second == 0) {
            out.left_freq.push_back(0.5);
            out.support.push_back(0);
        } else {
            out.left_freq.push_back(static_cast<double>(it->second.first) /
                                    static_cast<double>(it->second.second));
            out.support.push_back(it->second.second);
        }
    }
    return out;
}

// mean predicted left-probability (1 - predicted right-probability) per
// triple, over the treebank's gold edges
inline TypologyVector predicted_order_frequency(const OrderPredictor& model, const Treebank& tb,
                                                const std::vector<TripleKey>& keys) {
    std::map<TripleKey, std::pair<double, std::size_t>> tally;  // left-prob sum, count
    for (const Sentence& s : tb.sentences) {
        std::vector<OrderEdge> edges;
        std::vector<TripleKey> edge_keys;
        for (const OrderInstance& oi : extract_instances(s)) {
            edges.push_back({oi.dep, oi.head});
            edge_keys.push_back(TripleKey{oi.dep_upos, oi.head_upos,
                                          s.tokens[oi.dep - 1].deprel});
        }
        if (edges.empty()) continue;
        const std::vector<double> right = model.predict(s, edges);
        for (std::size_t k = 0; k < edges.size(); ++k) {
            auto& [acc, n] = tally[edge_keys[k]];
            acc += 1.0 - right[k];
            ++n;
        }
    }
    TypologyVector out;
    out.keys = keys;
    for (const TripleKey& key : keys) {
        auto it = tally.find(key);
        if (it == tally.end() || it->second.second == 0) {
            out.left_freq.push_back(0.5);
            out.support.push_back(0);
        } else {
            out.left_freq.push_back(it->second.first / static_cast<double>(it->second.second));
            out.support.push_back(it->second.second);
        }
    }
    return out;
}

// Manhattan distance over aligned vectors, divided by the triple count by
// default so values land on a 0-1 scale.
inline double word_order_distance(const TypologyVector& a, const TypologyVector& b,
                                  bool normalized = true) {
    if (a.keys != b.keys)
        throw std::invalid_argument("word order distance: vectors use different triples");
    if (a.keys.empty()) throw std::invalid_argument("word order distance: empty vectors");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a.left_freq[i] - b.left_freq[i]);
    return normalized ? d / static_cast<double>(a.size()) : d;
}

struct PearsonResult {
    double r = 0.0;
    double p = 1.0;  // two-sided
};

inline PearsonResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 3) throw std::invalid_argument("pearson: need at least 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: an input has zero variance");

    PearsonResult out;
    out.r = sxy / std::sqrt(sxx * syy);
    if (out.r > 1.0) out.r = 1.0;  // guard rounding at perfect collinearity
    if (out.r < -1.0) out.r = -1.0;
    const double df = n - 2.0;
    const double denom = 1.0 - out.r * out.r;
    if (denom <= 0.0) {
        out.p = 0.0;
    } else {
        const double t = std::abs(out.r) * std::sqrt(df / denom);
        boost::math::students_t_distribution<double> dist(df);
        out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
    }
    return out;
}

// CSV form: header then one "dep_upos,head_upos,deprel,left_freq,support"
// row per triple
inline void write_typology_csv(std::ostream& os, const TypologyVector& tv) {
    os << "dep_upos,head_upos,deprel,left_freq,support\n";
    for (std::size_t i = 0; i < tv.size(); ++i) {
        std::ostringstream freq;
        freq.precision(17);
        freq << tv.left_freq[i];
        os << std::get<0>(tv.keys[i]) << ',' << std::get<1>(tv.keys[i]) << ','
           << std::get<2>(tv.keys[i]) << ',' << freq.str() << ',' << tv.support[i] << '\n';
    }
}

inline TypologyVector parse_typology_csv(std::istream& is) {
    TypologyVector out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("dep_upos,", 0) == 0) continue;  // header
        std::vector<std::string> cols;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) cols.push_back(field);
        if (cols.size() != 5)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": expected 5 comma-separated columns, got " +
                                     std::to_string(cols.size()));
        double freq = 0.0;
        std::size_t support = 0;
        try {
            std::size_t used = 0;
            freq = std::stod(cols[3], &used);
            if (used != cols[3].size()) throw std::invalid_argument("trailing");
            support = std::stoul(cols[4], &used);
            if (used != cols[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": bad numeric field in '" + line + "'");
        }
        if (freq < 0.0 || freq > 1.0)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": left_freq outside [0,1]");
        out.keys.push_back(TripleKey{cols[0], cols[1], cols[2]});
        out.left_freq.push_back(freq);
        out.support.push_back(support);
    }
    return out;
}

inline void write_typology_csv_file(const std::string& path, const TypologyVector& tv) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error(path + ": cannot open for writing");
    write_typology_csv(os, tv);
    if (!os) throw std::runtime_error(path + ": write failed");
}

inline TypologyVector parse_typology_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error(path + ": cannot open");
    try {
        return parse_typology_csv(is);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace xling

#endif  // XLING_TYPOLOGY_HPP
