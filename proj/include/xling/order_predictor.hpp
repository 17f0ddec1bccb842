// Common interface for anything that predicts, per dependency edge, the
// probability that the dependent sits to the right of its head.

#ifndef XLING_ORDER_PREDICTOR_HPP
#define XLING_ORDER_PREDICTOR_HPP

#include <cstddef>
#include <vector>

#include "xling/treebank.hpp"

namespace xling {

// One directed dependency edge, by 1-based sentence positions.
struct OrderEdge {
    std::size_t dep = 0;
    std::size_t head = 0;
};

class OrderPredictor {
public:
    virtual ~OrderPredictor() = default;

    // P(dependent right of head) in [0,1], one entry per edge. Implementations
    // may use the sentence's POS tags, labels, or nothing but a seed.
    virtual std::vector<double> predict(const Sentence& s,
                                        const std::vector<OrderEdge>& edges) const = 0;
};

}  // namespace xling

#endif  // XLING_ORDER_PREDICTOR_HPP
