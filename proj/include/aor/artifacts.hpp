#pragma once

// Line-oriented artifact files: BTS labels, network checkpoints,
// observation weights, and the accuracy reports.
//
//   aor-labels 1                      aor-checkpoint 1
//   actions <A>                       kind mlp | lstm
//   labels <S>                        sizes <layer sizes>       (mlp)
//   records <N>                       shape <in> <hidden> <layers> <out>  (lstm)
//   r <obs> <S belief> <A values>     blocks <K>
//   end                               block <k> <count> <values>
//                                     end
//   aor-weights 1
//   count <N>
//   w <obs> <weight>
//   end

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "aor/nn.hpp"
#include "aor/obs_opt.hpp"
#include "aor/planner.hpp"
#include "aor/policy.hpp"
#include "aor/text_io.hpp"

namespace aor {

inline constexpr long kLabelsVersion = 1;
inline constexpr long kCheckpointVersion = 1;
inline constexpr long kWeightsVersion = 1;
inline constexpr long kAccuracyCsvVersion = 1;

// ---------------------------------------------------------------------------
// Labels

inline void write_labels(std::ostream& out, const ActionValueLabels& labels) {
    const std::size_t S = labels.records.empty() ? 0 : labels.records.begin()->second.belief.size();
    out << "aor-labels " << kLabelsVersion << '\n';
    out << "actions " << labels.num_actions << '\n';
    out << "labels " << S << '\n';
    out << "records " << labels.records.size() << '\n';
    for (const auto& [o, rec] : labels.records) {
        out << "r " << o;
        for (double p : rec.belief.probs()) out << ' ' << text::fmt(p);
        for (double q : rec.action_values) out << ' ' << text::fmt(q);
        out << '\n';
    }
    out << "end\n";
}

inline ActionValueLabels read_labels(std::istream& in) {
    text::LineReader r(in);
    r.header("aor-labels", kLabelsVersion);
    ActionValueLabels labels;
    labels.num_actions = r.to_size(r.expect("actions", 1)[1]);
    const std::size_t S = r.to_size(r.expect("labels", 1)[1]);
    const std::size_t n = r.to_size(r.expect("records", 1)[1]);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = r.expect("r", 1);
        const ObservationId o = r.to_size(t[1]);
        const auto values = r.doubles(t, 2, S + labels.num_actions);
        if (labels.records.count(o)) throw ParseError(r.line(), "duplicate record for observation " + t[1]);
        RootValues rec;
        try {
            rec.belief = Belief(std::vector<double>(values.begin(), values.begin() + static_cast<long>(S)));
        } catch (const Error& e) {
            throw ParseError(r.line(), std::string("invalid belief: ") + e.what());
        }
        rec.action_values.assign(values.begin() + static_cast<long>(S), values.end());
        rec.value = rec.action_values.empty() ? 0.0 : rec.action_values[argmax_index(rec.action_values)];
        labels.records.emplace(o, std::move(rec));
    }
    r.finish();
    return labels;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline void write_blocks(std::ostream& out, const std::vector<double>& params, const std::vector<std::size_t>& blocks) {
    out << "blocks " << blocks.size() << '\n';
    std::size_t at = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        out << "block " << k << ' ' << blocks[k];
        for (std::size_t i = 0; i < blocks[k]; ++i) out << ' ' << text::fmt(params[at + i]);
        out << '\n';
        at += blocks[k];
    }
    out << "end\n";
}

inline void read_blocks(text::LineReader& r, std::vector<double>& params, const std::vector<std::size_t>& blocks) {
    if (r.to_size(r.expect("blocks", 1)[1]) != blocks.size())
        throw ParseError(r.line(), "block count does not match the network shape");
    std::size_t at = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto t = r.expect("block", 2);
        if (r.to_size(t[1]) != k || r.to_size(t[2]) != blocks[k])
            throw ParseError(r.line(), "block " + std::to_string(k) + " must hold " + std::to_string(blocks[k]) + " values");
        const auto values = r.doubles(t, 3, blocks[k]);
        std::copy(values.begin(), values.end(), params.begin() + static_cast<long>(at));
        at += blocks[k];
    }
    r.finish();
}

inline void expect_kind(text::LineReader& r, const std::string& kind) {
    const auto t = r.expect("kind", 1);
    if (t[1] != kind) throw ParseError(r.line(), "checkpoint holds a '" + t[1] + "' network, expected '" + kind + "'");
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const nn::Mlp& net) {
    out << "aor-checkpoint " << kCheckpointVersion << "\nkind mlp\nsizes";
    for (std::size_t s : net.sizes()) out << ' ' << s;
    out << '\n';
    detail::write_blocks(out, net.params(), net.block_sizes());
}

inline void write_checkpoint(std::ostream& out, const nn::LstmNet& net) {
    const auto& s = net.shape();
    out << "aor-checkpoint " << kCheckpointVersion << "\nkind lstm\n";
    out << "shape " << s.input_dim << ' ' << s.hidden << ' ' << s.layers << ' ' << s.outputs << '\n';
    detail::write_blocks(out, net.params(), net.block_sizes());
}

inline nn::Mlp read_mlp(std::istream& in) {
    text::LineReader r(in);
    r.header("aor-checkpoint", kCheckpointVersion);
    detail::expect_kind(r, "mlp");
    const auto t = r.expect("sizes", 2);
    std::vector<std::size_t> sizes;
    for (std::size_t i = 1; i < t.size(); ++i) sizes.push_back(r.to_size(t[i]));
    nn::Mlp net;
    try {
        net = nn::Mlp(sizes);
    } catch (const Error& e) {
        throw ParseError(r.line(), e.what());
    }
    detail::read_blocks(r, net.params(), net.block_sizes());
    return net;
}

inline nn::LstmNet read_lstm(std::istream& in) {
    text::LineReader r(in);
    r.header("aor-checkpoint", kCheckpointVersion);
    detail::expect_kind(r, "lstm");
    const auto t = r.expect("shape", 4);
    if (t.size() != 5) throw ParseError(r.line(), "shape takes four values");
    nn::LstmNet net;
    try {
        net = nn::LstmNet({r.to_size(t[1]), r.to_size(t[2]), r.to_size(t[3]), r.to_size(t[4])});
    } catch (const Error& e) {
        throw ParseError(r.line(), e.what());
    }
    detail::read_blocks(r, net.params(), net.block_sizes());
    return net;
}

// ---------------------------------------------------------------------------
// Observation weights

inline void write_weights(std::ostream& out, const ObservationWeights& w) {
    out << "aor-weights " << kWeightsVersion << "\ncount " << w.values.size() << '\n';
    for (const auto& [o, v] : w.values) out << "w " << o << ' ' << text::fmt(v) << '\n';
    out << "end\n";
}

inline ObservationWeights read_weights(std::istream& in) {
    text::LineReader r(in);
    r.header("aor-weights", kWeightsVersion);
    ObservationWeights w;
    const std::size_t n = r.to_size(r.expect("count", 1)[1]);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = r.expect("w", 2);
        const double v = r.to_double(t[2]);
        if (!(v >= 0.0)) throw ParseError(r.line(), "weights must be non-negative");
        if (!w.values.emplace(r.to_size(t[1]), v).second) throw ParseError(r.line(), "duplicate observation " + t[1]);
    }
    r.finish();
    return w;
}

// ---------------------------------------------------------------------------
// Accuracy reports

/// One row per (method, step): method,step,mean,std,seeds.
inline void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyTable>& tables) {
    out << "method,step,mean,std,seeds\n";
    for (const auto& t : tables)
        for (std::size_t k = 0; k <= t.steps; ++k)
            out << t.method << ',' << k << ',' << text::fmt(t.mean(k)) << ',' << text::fmt(t.stddev(k)) << ','
                << t.seeds() << '\n';
}

/// Per-seed accuracies: method,seed,step,accuracy.
inline void write_seed_csv(std::ostream& out, const std::vector<AccuracyTable>& tables) {
    out << "method,seed,step,accuracy\n";
    for (const auto& t : tables)
        for (std::size_t s = 0; s < t.rows.size(); ++s)
            for (std::size_t k = 0; k <= t.steps; ++k)
                out << t.method << ',' << s << ',' << k << ',' << text::fmt(t.rows[s][k]) << '\n';
}

inline std::vector<AccuracyTable> read_seed_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "method,seed,step,accuracy") throw ParseError(1, "missing per-seed CSV header");
    std::vector<AccuracyTable> tables;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
            cells.push_back(line.substr(start, pos - start));
        cells.push_back(line.substr(start));
        if (cells.size() != 4) throw ParseError(line_no, "expected 4 cells");
        const std::size_t seed = text::parse_size(cells[1], line_no), step = text::parse_size(cells[2], line_no);
        const double acc = text::parse_double(cells[3], line_no);
        if (tables.empty() || tables.back().method != cells[0]) tables.push_back({cells[0], 0, {}});
        auto& t = tables.back();
        if (seed >= t.rows.size()) t.rows.resize(seed + 1);
        if (step != t.rows[seed].size()) throw ParseError(line_no, "steps must be listed in order");
        t.rows[seed].push_back(acc);
        t.steps = std::max(t.steps, step);
    }
    return tables;
}

/// Text table with one row per method and one "mean±se" column per step.
inline std::string summary_table(const std::vector<AccuracyTable>& tables) {
    std::size_t steps = 0, width = 6;
    for (const auto& t : tables) {
        steps = std::max(steps, t.steps);
        width = std::max(width, t.method.size());
    }
    std::string out = "method";
    out.append(width - 6, ' ');
    char cell[64];
    for (std::size_t k = 0; k <= steps; ++k) {
        std::snprintf(cell, sizeof cell, " | %-11zu", k);
        out += cell;
    }
    out += '\n';
    for (const auto& t : tables) {
        out += t.method;
        out.append(width - t.method.size(), ' ');
        for (std::size_t k = 0; k <= steps; ++k) {
            if (k <= t.steps)
                std::snprintf(cell, sizeof cell, " | %.3f±%.3f", t.mean(k), t.std_error(k));
            else
                std::snprintf(cell, sizeof cell, " | %-11s", "-");
            out += cell;
        }
        out += '\n';
    }
    return out;
}

}  // namespace aor
