#include "hml/util.hpp"

#include <atomic>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "hml/error.hpp"

namespace hml {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonNestingGrid: return "NonNestingGrid";
        case ErrorCode::NonDivisibleImage: return "NonDivisibleImage";
        case ErrorCode::CyclicSpec: return "CyclicSpec";
        case ErrorCode::OutOfBoundsRect: return "OutOfBoundsRect";
        case ErrorCode::UnknownPatch: return "UnknownPatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::FractionOutOfRange: return "FractionOutOfRange";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::InconsistentPatchSet: return "InconsistentPatchSet";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::EmptyGallery: return "EmptyGallery";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::MissingClassifier: return "MissingClassifier";
        case ErrorCode::MissingRecord: return "MissingRecord";
        case ErrorCode::AllAbstain: return "AllAbstain";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::UnknownGlobalKind: return "UnknownGlobalKind";
        case ErrorCode::ConfigConflict: return "ConfigConflict";
        case ErrorCode::HierarchyMismatch: return "HierarchyMismatch";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::EmptyProbeSet: return "EmptyProbeSet";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::CorruptBundle: return "CorruptBundle";
        case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
        case ErrorCode::UnsupportedAlphaOrK: return "UnsupportedAlphaOrK";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "UnknownError";
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

double parse_double(const std::string& s, bool* ok) {
    const std::string t = trim(s);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    const bool good = res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty();
    if (ok) *ok = good;
    return good ? v : 0.0;
}

long parse_long(const std::string& s, bool* ok) {
    const std::string t = trim(s);
    long v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    const bool good = res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty();
    if (ok) *ok = good;
    return good ? v : 0;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::string format_fixed(double v, int digits) {
    std::array<char, 128> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                   std::chars_format::fixed, digits);
    return std::string(buf.data(), res.ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) fail(ErrorCode::IoFailure, "read failed: " + path);
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path dir = target.parent_path().empty() ? fs::path(".") : target.parent_path();
    static std::atomic<std::uint64_t> counter{0};
    const fs::path tmp = dir / (target.filename().string() + ".tmp" +
                                std::to_string(counter.fetch_add(1)));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoFailure, "cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorCode::IoFailure, "rename failed: " + path);
    }
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    unsigned n = threads > 0 ? static_cast<unsigned>(threads)
                             : std::max(1u, std::thread::hardware_concurrency());
    n = static_cast<unsigned>(std::min<std::size_t>(n, count));
    if (n <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n);
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (unsigned t = 0; t < n; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::uint32_t crc32(const void* data, std::size_t size) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ p[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

} // namespace hml
