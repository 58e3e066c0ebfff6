#pragma once

#include "ctalvae/net.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ctalvae {

enum class Label : std::uint8_t { benign = 0, anomalous = 1 };

/// One aggregated network flow. `dst` is the receiver key used for
/// sequence construction.
struct FlowRecord {
    double ts = 0.0;
    std::string src;
    std::string dst;
    Vec features;
};

struct FeatureSchema {
    std::vector<std::string> names;
    int dim() const { return static_cast<int>(names.size()); }
    void validate() const;  // names unique and non-empty
};

/// Per-feature z-score statistics. `std` is floored so normalization never
/// divides by zero.
struct Normalizer {
    static constexpr double kStdFloor = 1e-8;
    Vec mean;
    Vec std;
    static Normalizer identity(int dim);
    Vec apply(const Vec& x) const;
};

/// Fixed-length window of normalized flow features directed at one
/// receiver. mask[t] is true for real flows; padded rows are all-zero and
/// only ever appear after the last real row.
struct Sequence {
    std::string receiver;
    double start_ts = 0.0;
    Mat data;  // seq_len x dim
    std::vector<std::uint8_t> mask;
    std::optional<Label> label;  // evaluation only, never read by training

    int valid_len() const;
};

struct ParsedFlows {
    FeatureSchema schema;
    std::vector<FlowRecord> flows;
};

/// CSV contract: header row with required columns ts, src_ip, dst_ip; all
/// remaining columns are numeric features whose file order defines the
/// schema. '.' decimal point, no quoting.
ParsedFlows parse_flows_csv(std::istream& in);

/// Like parse_flows_csv but the feature columns must match `expect`
/// exactly (names and order).
std::vector<FlowRecord> parse_flows(std::istream& in,
                                    const FeatureSchema& expect);

void write_flows_csv(std::ostream& out, const FeatureSchema& schema,
                     const std::vector<FlowRecord>& flows);

/// Per-feature mean and (population) standard deviation, std floored at
/// Normalizer::kStdFloor. Requires at least 2 flows.
Normalizer fit_normalizer(const std::vector<FlowRecord>& flows);

/// Groups flows by receiver, sorts each group by ts (stable on ties),
/// splits into consecutive non-overlapping windows of `seq_len` rows and
/// z-scores the features. The final partial window per receiver is
/// zero-padded with mask=false. Output is ordered by (receiver, time).
/// When `flow_labels` is given (parallel to `flows`) each sequence gets
/// label=anomalous iff any of its real rows came from an anomalous flow.
std::vector<Sequence> build_sequences(
    const std::vector<FlowRecord>& flows, const Normalizer& norm, int seq_len,
    const std::vector<Label>* flow_labels = nullptr);

}  // namespace ctalvae
