#pragma once

// Small helpers shared by the line-oriented artifact formats.

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aor/errors.hpp"

namespace aor::text {

/// Shortest representation that parses back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error("cannot format number");
    return std::string(buf, end);
}

inline std::string join(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ' ';
        out += fmt(values[i]);
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw ParseError(line, "bad number '" + std::string(tok) + "'");
    return v;
}

inline long parse_long(std::string_view tok, std::size_t line) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) throw ParseError(line, "bad integer '" + std::string(tok) + "'");
    return v;
}

inline std::size_t parse_size(std::string_view tok, std::size_t line) {
    const long v = parse_long(tok, line);
    if (v < 0) throw ParseError(line, "negative count '" + std::string(tok) + "'");
    return static_cast<std::size_t>(v);
}

/// Tokenizing line reader; blank lines and lines starting with '#' are skipped.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    /// Next non-empty tokenized line, or false at end of input.
    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            tokens.clear();
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok) tokens.push_back(tok);
            if (tokens.empty() || tokens.front().front() == '#') continue;
            return true;
        }
        return false;
    }

    /// Next line, which must start with `keyword` and carry at least
    /// `min_args` further tokens.
    std::vector<std::string> expect(std::string_view keyword, std::size_t min_args = 0) {
        std::vector<std::string> tokens;
        if (!next(tokens)) throw ParseError(line_no_ + 1, "unexpected end of file, expected '" + std::string(keyword) + "'");
        if (tokens.front() != keyword)
            throw ParseError(line_no_, "expected '" + std::string(keyword) + "', found '" + tokens.front() + "'");
        if (tokens.size() < min_args + 1) throw ParseError(line_no_, "too few values after '" + std::string(keyword) + "'");
        return tokens;
    }

    std::size_t line() const noexcept { return line_no_; }

    double to_double(const std::string& tok) const;
    long to_long(const std::string& tok) const;
    std::size_t to_size(const std::string& tok) const;

    /// Parses tokens[first, first + count) as doubles; the line must have
    /// exactly first + count tokens.
    std::vector<double> doubles(const std::vector<std::string>& tokens, std::size_t first, std::size_t count) const {
        if (tokens.size() != first + count)
            throw ParseError(line_no_, "expected " + std::to_string(count) + " values, found " +
                                           std::to_string(tokens.size() >= first ? tokens.size() - first : 0));
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = to_double(tokens[first + i]);
        return out;
    }

    /// Checks the "<magic> <version>" header line.
    void header(std::string_view magic, long version) {
        std::vector<std::string> tokens;
        if (!next(tokens)) throw ParseError(1, "empty file");
        if (tokens.front() != magic || tokens.size() != 2)
            throw ParseError(line_no_, "missing '" + std::string(magic) + "' header");
        const long found = to_long(tokens[1]);
        if (found != version)
            throw VersionMismatch(std::string(magic) + " version " + std::to_string(found) + " is not supported (expected " +
                                  std::to_string(version) + ")");
    }

    void finish() {
        expect("end");
        std::vector<std::string> tokens;
        if (next(tokens)) throw ParseError(line_no_, "content after 'end'");
    }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

inline double LineReader::to_double(const std::string& tok) const { return parse_double(tok, line_no_); }
inline long LineReader::to_long(const std::string& tok) const { return parse_long(tok, line_no_); }
inline std::size_t LineReader::to_size(const std::string& tok) const { return parse_size(tok, line_no_); }

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace aor::text
