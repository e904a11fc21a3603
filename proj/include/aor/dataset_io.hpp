#pragma once

// Dataset file (version 1). Line oriented, '#' starts a comment line:
//
//   aor-dataset 1
//   labels <|S|>
//   views <V>
//   actions <offset>...              one signed rotation offset per action
//   jitter <p>
//   feature_dim <F>
//   w <class> <F values>             one line per class, in class order
//   bias <|S| values>
//   normalizers <|S| values>
//   observations <|S|*V>
//   o <id> <label> <view> <F feature values> <|S| likelihood values>
//   ...                              one line per observation, in id order
//   end
//
// The likelihood values of observation o are P(s, a, o) for s = 0..|S|-1 and
// every action (the table does not depend on the action).

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "aor/text_io.hpp"
#include "aor/world.hpp"

namespace aor {

inline constexpr long kDatasetVersion = 1;

inline void write_dataset(std::ostream& out, const Dataset& data) {
    const auto& w = data.world;
    const auto& p = data.params;
    const auto& m = data.model;
    out << "aor-dataset " << kDatasetVersion << '\n';
    out << "labels " << w.num_labels << '\n';
    out << "views " << w.views << '\n';
    out << "actions";
    for (int off : w.action_offsets) out << ' ' << off;
    out << '\n';
    out << "jitter " << text::fmt(w.jitter) << '\n';
    out << "feature_dim " << w.feature_dim << '\n';
    for (std::size_t s = 0; s < p.num_classes; ++s) {
        out << "w " << s;
        for (std::size_t k = 0; k < p.feature_dim; ++k) out << ' ' << text::fmt(p.weights[s * p.feature_dim + k]);
        out << '\n';
    }
    out << "bias " << text::join(p.bias) << '\n';
    out << "normalizers " << text::join({m.normalizers().begin(), m.normalizers().end()}) << '\n';
    out << "observations " << w.num_observations() << '\n';
    for (ObservationId o = 0; o < w.num_observations(); ++o) {
        out << "o " << o << ' ' << w.label_of(o) << ' ' << w.view_of(o);
        for (std::size_t k = 0; k < w.feature_dim; ++k) out << ' ' << text::fmt(w.features[o * w.feature_dim + k]);
        for (StateId s = 0; s < w.num_labels; ++s) out << ' ' << text::fmt(m.prob(s, 0, o));
        out << '\n';
    }
    out << "end\n";
}

inline Dataset read_dataset(std::istream& in) {
    text::LineReader r(in);
    r.header("aor-dataset", kDatasetVersion);
    Dataset data;
    auto& w = data.world;
    w.num_labels = r.to_size(r.expect("labels", 1)[1]);
    w.views = r.to_size(r.expect("views", 1)[1]);
    if (w.num_labels == 0 || w.views == 0) throw ParseError(r.line(), "labels and views must be positive");
    {
        const auto t = r.expect("actions", 1);
        for (std::size_t i = 1; i < t.size(); ++i) w.action_offsets.push_back(static_cast<int>(r.to_long(t[i])));
    }
    w.jitter = r.to_double(r.expect("jitter", 1)[1]);
    w.feature_dim = r.to_size(r.expect("feature_dim", 1)[1]);
    if (w.feature_dim == 0) throw ParseError(r.line(), "feature_dim must be positive");

    auto& p = data.params;
    p.num_classes = w.num_labels;
    p.feature_dim = w.feature_dim;
    p.weights.reserve(p.num_classes * p.feature_dim);
    for (std::size_t s = 0; s < p.num_classes; ++s) {
        const auto t = r.expect("w", 1);
        if (r.to_size(t[1]) != s) throw ParseError(r.line(), "weight rows must appear in class order");
        const auto row = r.doubles(t, 2, p.feature_dim);
        p.weights.insert(p.weights.end(), row.begin(), row.end());
    }
    p.bias = r.doubles(r.expect("bias"), 1, p.num_classes);
    auto normalizers = r.doubles(r.expect("normalizers"), 1, p.num_classes);

    const std::size_t num_obs = r.to_size(r.expect("observations", 1)[1]);
    if (num_obs != w.num_observations()) throw ParseError(r.line(), "observation count must equal labels * views");
    w.features.reserve(num_obs * w.feature_dim);
    std::vector<double> per_class(w.num_labels * num_obs);
    for (ObservationId o = 0; o < num_obs; ++o) {
        const auto t = r.expect("o", 3);
        if (r.to_size(t[1]) != o || r.to_size(t[2]) != w.label_of(o) || r.to_size(t[3]) != w.view_of(o))
            throw ParseError(r.line(), "observation lines must appear in id order with matching label and view");
        const auto values = r.doubles(t, 4, w.feature_dim + w.num_labels);
        w.features.insert(w.features.end(), values.begin(), values.begin() + static_cast<long>(w.feature_dim));
        for (StateId s = 0; s < w.num_labels; ++s) per_class[s * num_obs + o] = values[w.feature_dim + s];
    }
    r.finish();

    try {
        data.model = LikelihoodModel::action_independent(w.num_labels, w.num_actions(), num_obs, per_class,
                                                         std::move(normalizers));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(r.line(), std::string("invalid likelihood table: ") + e.what());
    }
    return data;
}

inline void save_dataset(const Dataset& data, const std::string& path) {
    auto out = text::open_out(path);
    write_dataset(out, data);
    if (!out) throw Error("failed writing '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
    auto in = text::open_in(path);
    return read_dataset(in);
}

}  // namespace aor
