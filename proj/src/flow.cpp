#include "ctalvae/flow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace ctalvae {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_double(const std::string& cell, int row, const std::string& col) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw DataError("row " + std::to_string(row) + ": cannot parse column '" +
                        col + "' value '" + cell + "' as a number");
    }
    if (!std::isfinite(value)) {
        throw DataError("row " + std::to_string(row) + ": column '" + col +
                        "' is not finite");
    }
    return value;
}

struct HeaderLayout {
    int ts_col = -1;
    int src_col = -1;
    int dst_col = -1;
    std::vector<int> feature_cols;
    FeatureSchema schema;
};

HeaderLayout parse_header(const std::string& line) {
    HeaderLayout layout;
    const auto cells = split_csv_line(line);
    for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        const std::string& name = cells[i];
        if (name == "ts") {
            layout.ts_col = i;
        } else if (name == "src_ip") {
            layout.src_col = i;
        } else if (name == "dst_ip") {
            layout.dst_col = i;
        } else {
            layout.feature_cols.push_back(i);
            layout.schema.names.push_back(name);
        }
    }
    for (const auto& [col, label] :
         {std::pair{layout.ts_col, "ts"}, {layout.src_col, "src_ip"},
          {layout.dst_col, "dst_ip"}}) {
        if (col < 0)
            throw DataError(std::string("missing required column '") + label +
                            "' in header");
    }
    layout.schema.validate();
    return layout;
}

}  // namespace

void FeatureSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second)
            throw DataError("duplicate feature column '" + n + "'");
    }
}

Normalizer Normalizer::identity(int dim) {
    Normalizer n;
    n.mean = Vec::Zero(dim);
    n.std = Vec::Ones(dim);
    return n;
}

Vec Normalizer::apply(const Vec& x) const {
    if (x.size() != mean.size())
        throw DataError("normalizer dimension mismatch: got " +
                        std::to_string(x.size()) + ", expected " +
                        std::to_string(mean.size()));
    return (x - mean).cwiseQuotient(std);
}

int Sequence::valid_len() const {
    int n = 0;
    while (n < static_cast<int>(mask.size()) && mask[n]) ++n;
    return n;
}

ParsedFlows parse_flows_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input: no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const HeaderLayout layout = parse_header(line);
    const std::size_t ncols = layout.feature_cols.size() + 3;

    ParsedFlows out;
    out.schema = layout.schema;
    int row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = split_csv_line(line);
        if (cells.size() != ncols) {
            throw DataError("row " + std::to_string(row) +
                            ": dimension mismatch, expected " +
                            std::to_string(ncols) + " cells, got " +
                            std::to_string(cells.size()));
        }
        FlowRecord rec;
        rec.ts = parse_double(cells[layout.ts_col], row, "ts");
        rec.src = cells[layout.src_col];
        rec.dst = cells[layout.dst_col];
        rec.features = Vec(layout.schema.dim());
        for (int j = 0; j < layout.schema.dim(); ++j) {
            rec.features(j) = parse_double(cells[layout.feature_cols[j]], row,
                                           layout.schema.names[j]);
        }
        out.flows.push_back(std::move(rec));
    }
    return out;
}

std::vector<FlowRecord> parse_flows(std::istream& in,
                                    const FeatureSchema& expect) {
    ParsedFlows parsed = parse_flows_csv(in);
    if (parsed.schema.names != expect.names) {
        throw DataError(
            "feature columns do not match the expected schema (expected " +
            std::to_string(expect.dim()) + " features, got " +
            std::to_string(parsed.schema.dim()) + ")");
    }
    return std::move(parsed.flows);
}

void write_flows_csv(std::ostream& out, const FeatureSchema& schema,
                     const std::vector<FlowRecord>& flows) {
    out << "ts,src_ip,dst_ip";
    for (const auto& n : schema.names) out << ',' << n;
    out << '\n';
    char buf[64];
    for (const auto& f : flows) {
        std::snprintf(buf, sizeof(buf), "%.6f", f.ts);
        out << buf << ',' << f.src << ',' << f.dst;
        for (Eigen::Index j = 0; j < f.features.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.9g", f.features(j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

Normalizer fit_normalizer(const std::vector<FlowRecord>& flows) {
    if (flows.size() < 2)
        throw DataError("fit_normalizer needs at least 2 flows, got " +
                        std::to_string(flows.size()));
    const Eigen::Index dim = flows.front().features.size();
    Vec mean = Vec::Zero(dim);
    for (const auto& f : flows) {
        if (f.features.size() != dim)
            throw DataError("inconsistent feature dimension across flows");
        mean += f.features;
    }
    mean /= static_cast<double>(flows.size());
    Vec var = Vec::Zero(dim);
    for (const auto& f : flows) {
        var.array() += (f.features - mean).array().square();
    }
    var /= static_cast<double>(flows.size());
    Normalizer n;
    n.mean = std::move(mean);
    n.std = var.array().sqrt().max(Normalizer::kStdFloor);
    return n;
}

std::vector<Sequence> build_sequences(const std::vector<FlowRecord>& flows,
                                      const Normalizer& norm, int seq_len,
                                      const std::vector<Label>* flow_labels) {
    if (seq_len < 1) throw DataError("sequence length must be >= 1");
    if (flow_labels && flow_labels->size() != flows.size())
        throw DataError("flow label list length does not match flows");

    // receiver -> flow indices in input order; sorted map fixes output order
    std::map<std::string, std::vector<std::size_t>> by_receiver;
    for (std::size_t i = 0; i < flows.size(); ++i)
        by_receiver[flows[i].dst].push_back(i);

    std::vector<Sequence> out;
    for (auto& [receiver, idx] : by_receiver) {
        // stable: equal timestamps keep input order
        std::stable_sort(idx.begin(), idx.end(),
                         [&flows](std::size_t a, std::size_t b) {
                             return flows[a].ts < flows[b].ts;
                         });
        const int dim = static_cast<int>(flows[idx.front()].features.size());
        for (std::size_t w = 0; w < idx.size(); w += seq_len) {
            const int valid =
                static_cast<int>(std::min<std::size_t>(seq_len, idx.size() - w));
            Sequence s;
            s.receiver = receiver;
            s.start_ts = flows[idx[w]].ts;
            s.data = Mat::Zero(seq_len, dim);
            s.mask.assign(seq_len, 0);
            bool anomalous = false;
            for (int t = 0; t < valid; ++t) {
                const std::size_t fi = idx[w + t];
                s.data.row(t) = norm.apply(flows[fi].features).transpose();
                s.mask[t] = 1;
                if (flow_labels && (*flow_labels)[fi] == Label::anomalous)
                    anomalous = true;
            }
            if (flow_labels)
                s.label = anomalous ? Label::anomalous : Label::benign;
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace ctalvae
