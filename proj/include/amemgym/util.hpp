#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace amemgym {

// ─── Errors ──────────────────────────────────────────────────────────────────

/// Error categories, mapped one-to-one onto CLI exit codes.
enum class ErrorKind {
    usage,          // bad flags / bad invocation          -> exit 2
    io,             // filesystem, missing/corrupt files   -> exit 3
    backend,        // transport, auth, retry exhaustion   -> exit 4
    parse,          // unusable model output               -> exit 4
    validation,     // invariant violations, bad documents -> exit 5
    generation,     // pipeline could not converge         -> exit 5
    compatibility,  // mismatched blueprint/trace pairing  -> exit 5
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

    int exit_code() const {
        switch (kind_) {
            case ErrorKind::usage: return 2;
            case ErrorKind::io: return 3;
            case ErrorKind::backend:
            case ErrorKind::parse: return 4;
            default: return 5;
        }
    }

private:
    ErrorKind kind_;
};

// ─── Deterministic hashing and RNG ───────────────────────────────────────────
// File-format-affecting randomness goes through these rather than <random>
// distributions so outputs do not depend on the standard library build.

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// splitmix64 stream; cheap, stable across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    double unit() { return double(next() >> 11) * (1.0 / 9007199254740992.0); }

private:
    std::uint64_t state_;
};

/// In-place Fisher-Yates driven by a splitmix stream.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

/// min(k, n) distinct indices from [0, n), deterministic in seed.
inline std::vector<std::size_t> deterministic_sample(std::size_t n, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    deterministic_shuffle(idx, seed);
    idx.resize(std::min(k, n));
    return idx;
}

// ─── Strings ─────────────────────────────────────────────────────────────────

inline std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline bool contains(std::string_view hay, std::string_view needle) {
    return hay.find(needle) != std::string_view::npos;
}

inline std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

/// Fixed-precision decimal, used for CSV cells so emission is byte-stable.
inline std::string fmt_fixed(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

// ─── Dates ───────────────────────────────────────────────────────────────────
// Periods advance by one calendar month. Dates are plain "YYYY-MM-DD" strings;
// day-of-month is clamped to the target month's length.

struct Date {
    int year = 2025, month = 1, day = 1;
};

inline Date parse_date(const std::string& s) {
    Date d;
    if (std::sscanf(s.c_str(), "%d-%d-%d", &d.year, &d.month, &d.day) != 3 || d.month < 1 ||
        d.month > 12 || d.day < 1 || d.day > 31)
        throw Error(ErrorKind::validation, "bad date string: " + s);
    return d;
}

inline int days_in_month(int year, int month) {
    static const int t[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2 && (year % 4 == 0 && (year % 100 != 0 || year % 400 == 0))) return 29;
    return t[month - 1];
}

inline std::string format_date(const Date& d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

inline std::string add_months(const std::string& iso, int months) {
    Date d = parse_date(iso);
    int m0 = (d.year * 12 + (d.month - 1)) + months;
    d.year = m0 / 12;
    d.month = m0 % 12 + 1;
    d.day = std::min(d.day, days_in_month(d.year, d.month));
    return format_date(d);
}

// ─── Files ───────────────────────────────────────────────────────────────────

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write via a sibling temp file + rename so readers never observe a torn file.
inline void atomic_write_file(const std::filesystem::path& p, std::string_view content) {
    namespace fs = std::filesystem;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw Error(ErrorKind::io, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw Error(ErrorKind::io, "cannot rename " + tmp.string() + " -> " + p.string());
}

}  // namespace amemgym
