#include "cascade/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

constexpr char kMagic[4] = {'C', 'L', 'T', 'G'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 16;
constexpr std::size_t kRecordSize = 16;

void put_u16(unsigned char* p, std::uint16_t v) {
    p[0] = static_cast<unsigned char>(v & 0xff);
    p[1] = static_cast<unsigned char>(v >> 8);
}

void put_u64(unsigned char* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Metadata values are single-line by format; fold any embedded newline.
std::string one_line(const std::string& s) {
    std::string out = s;
    std::replace(out.begin(), out.end(), '\n', ' ');
    std::replace(out.begin(), out.end(), '\r', ' ');
    return out;
}

void write_meta_lines(std::ostream& os, const std::map<std::string, std::string>& metadata) {
    for (const auto& [k, v] : metadata) os << "# " << k << "=" << one_line(v) << "\n";
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// "# key=value" comment -> (key, value); plain comments yield nothing.
std::optional<std::pair<std::string, std::string>> parse_meta_comment(const std::string& line) {
    std::string body = trim(line.substr(1));
    const auto eq = body.find('=');
    if (eq == std::string::npos || eq == 0) return std::nullopt;
    return std::make_pair(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
}

double parse_double(const std::string& s, const std::string& path, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ": malformed " + what + " '" + s + "'");
    }
}

std::int64_t parse_int(const std::string& s, const std::string& path, const char* what) {
    try {
        std::size_t used = 0;
        const std::int64_t v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(path + ": malformed " + what + " '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    return os;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("cannot open '" + path + "' for reading");
    return is;
}

void write_tags_text(const std::string& path, const TagStream& stream,
                     const std::map<std::string, std::string>& metadata) {
    std::ofstream os = open_out(path);
    os << "# duration_ps=" << stream.duration() << "\n";
    os << "# channel_count=" << stream.channel_count() << "\n";
    write_meta_lines(os, metadata);
    for (const TimeTag& tag : stream.tags()) os << tag.channel << "\t" << tag.t << "\n";
    if (!os) throw ValidationError("write failed on '" + path + "'");
}

void write_tags_binary(const std::string& path, const TagStream& stream,
                       const std::map<std::string, std::string>& metadata) {
    std::ofstream os = open_out(path);
    unsigned char header[kHeaderSize] = {};
    header[0] = kMagic[0];
    header[1] = kMagic[1];
    header[2] = kMagic[2];
    header[3] = kMagic[3];
    put_u16(header + 4, kVersion);
    put_u16(header + 6, static_cast<std::uint16_t>(stream.channel_count()));
    put_u64(header + 8, static_cast<std::uint64_t>(stream.duration()));
    os.write(reinterpret_cast<const char*>(header), kHeaderSize);
    for (const TimeTag& tag : stream.tags()) {
        unsigned char rec[kRecordSize] = {};
        put_u64(rec, static_cast<std::uint64_t>(tag.t));
        put_u16(rec + 8, tag.channel);
        os.write(reinterpret_cast<const char*>(rec), kRecordSize);
    }
    if (!os) throw ValidationError("write failed on '" + path + "'");
    os.close();

    // binary layout has no metadata room; provenance rides a text sidecar
    std::ofstream meta = open_out(path + ".meta");
    write_meta_lines(meta, metadata);
    if (!meta) throw ValidationError("write failed on '" + path + ".meta'");
}

TagStream read_tags_binary(std::ifstream& is, const std::string& path) {
    unsigned char header[kHeaderSize];
    is.read(reinterpret_cast<char*>(header), kHeaderSize);
    if (is.gcount() != static_cast<std::streamsize>(kHeaderSize))
        throw FormatError(path + ": truncated header");
    const std::uint16_t version = get_u16(header + 4);
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    const int channel_count = get_u16(header + 6);
    const std::int64_t duration = static_cast<std::int64_t>(get_u64(header + 8));

    std::vector<TimeTag> tags;
    std::size_t index = 0;
    while (true) {
        unsigned char rec[kRecordSize];
        is.read(reinterpret_cast<char*>(rec), kRecordSize);
        const std::streamsize got = is.gcount();
        if (got == 0) break;
        if (got != static_cast<std::streamsize>(kRecordSize))
            throw IntegrityError(path + ": truncated record at byte offset " +
                                 std::to_string(kHeaderSize + index * kRecordSize));
        for (std::size_t b = 10; b < kRecordSize; ++b)
            if (rec[b] != 0)
                throw FormatError(path + ": nonzero reserved bytes in record " +
                                  std::to_string(index));
        TimeTag tag;
        tag.t = static_cast<std::int64_t>(get_u64(rec));
        tag.channel = get_u16(rec + 8);
        if (!tags.empty() && tag_order(tag, tags.back()))
            throw IntegrityError(path + ": tags out of order at record " + std::to_string(index));
        tags.push_back(tag);
        ++index;
    }
    try {
        return TagStream(std::move(tags), duration, channel_count);
    } catch (const ValidationError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
}

TagStream read_tags_text(std::ifstream& is, const std::string& path) {
    std::optional<std::int64_t> duration;
    std::optional<int> channel_count;
    std::vector<TimeTag> tags;
    std::string line;
    std::size_t index = 0;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (const auto kv = parse_meta_comment(t)) {
                if (kv->first == "duration_ps")
                    duration = parse_int(kv->second, path, "duration_ps");
                else if (kv->first == "channel_count")
                    channel_count = static_cast<int>(parse_int(kv->second, path, "channel_count"));
            }
            continue;
        }
        std::istringstream row(t);
        long long channel = 0, time = 0;
        if (!(row >> channel >> time))
            throw FormatError(path + ": malformed tag line '" + t + "'");
        std::string rest;
        if (row >> rest) throw FormatError(path + ": trailing fields in tag line '" + t + "'");
        if (channel < 0 || channel > 0xffff)
            throw FormatError(path + ": channel out of range in line '" + t + "'");
        TimeTag tag{static_cast<std::uint16_t>(channel), time};
        if (!tags.empty() && tag_order(tag, tags.back()))
            throw IntegrityError(path + ": tags out of order at record " + std::to_string(index));
        tags.push_back(tag);
        ++index;
    }
    int max_channel = -1;
    std::int64_t max_t = 0;
    for (const TimeTag& tag : tags) {
        max_channel = std::max(max_channel, static_cast<int>(tag.channel));
        max_t = std::max(max_t, tag.t);
    }
    try {
        return TagStream(std::move(tags), duration.value_or(max_t),
                         channel_count.value_or(max_channel + 1 > 0 ? max_channel + 1 : 1));
    } catch (const ValidationError& e) {
        throw IntegrityError(path + ": " + e.what());
    }
}

}  // namespace

void write_tags(const std::string& path, const TagStream& stream, TagFormat format,
                const std::map<std::string, std::string>& metadata) {
    if (format == TagFormat::binary)
        write_tags_binary(path, stream, metadata);
    else
        write_tags_text(path, stream, metadata);
}

TagStream read_tags(const std::string& path) {
    std::ifstream is = open_in(path);
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() == 4 && std::equal(magic, magic + 4, kMagic)) {
        is.seekg(0);
        return read_tags_binary(is, path);
    }
    is.clear();
    is.seekg(0);
    return read_tags_text(is, path);
}

void write_histogram(const std::string& path, const Histogram& hist) {
    std::ofstream os = open_out(path);
    os << "# bin_width_ps=" << hist.bin_width() << "\n";
    os << "# tau_min_ps=" << hist.tau_min() << "\n";
    if (hist.norm()) os << "# norm=" << fmt_double(*hist.norm()) << "\n";
    std::map<std::string, std::string> meta = hist.metadata;
    meta.erase("bin_width_ps");
    meta.erase("tau_min_ps");
    meta.erase("norm");
    write_meta_lines(os, meta);
    for (std::size_t i = 0; i < hist.size(); ++i)
        os << fmt_double(hist.bin_center(i)) << "," << fmt_double(hist.counts()[i]) << "\n";
    if (!os) throw ValidationError("write failed on '" + path + "'");
}

Histogram read_histogram(const std::string& path) {
    std::ifstream is = open_in(path);
    std::optional<std::int64_t> bin_width, tau_min;
    std::optional<double> norm;
    std::map<std::string, std::string> metadata;
    std::vector<double> centers, counts;
    std::string line;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (const auto kv = parse_meta_comment(t)) {
                if (kv->first == "bin_width_ps")
                    bin_width = parse_int(kv->second, path, "bin_width_ps");
                else if (kv->first == "tau_min_ps")
                    tau_min = parse_int(kv->second, path, "tau_min_ps");
                else if (kv->first == "norm")
                    norm = parse_double(kv->second, path, "norm");
                else
                    metadata[kv->first] = kv->second;
            }
            continue;
        }
        const std::vector<std::string> cols = split(t, ',');
        if (cols.size() != 2) throw FormatError(path + ": expected 'tau_center_ps,count' row");
        centers.push_back(parse_double(trim(cols[0]), path, "tau_center_ps"));
        counts.push_back(parse_double(trim(cols[1]), path, "count"));
    }
    if (!bin_width) throw FormatError(path + ": missing mandatory header key bin_width_ps");
    if (!tau_min) throw FormatError(path + ": missing mandatory header key tau_min_ps");
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const double expected = static_cast<double>(*tau_min) +
                                (static_cast<double>(i) + 0.5) * static_cast<double>(*bin_width);
        if (std::abs(centers[i] - expected) > 0.25 * static_cast<double>(*bin_width))
            throw FormatError(path + ": bin center mismatch at row " + std::to_string(i));
    }
    try {
        return Histogram(*bin_width, *tau_min, std::move(counts), norm, std::move(metadata));
    } catch (const ValidationError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_peaks(const std::string& path, const PeakSeries& peaks,
                 const std::map<std::string, std::string>& metadata) {
    std::ofstream os = open_out(path);
    os << "# period_ps=" << peaks.period() << "\n";
    std::map<std::string, std::string> meta = metadata;
    meta.erase("period_ps");
    write_meta_lines(os, meta);
    for (const PeakEntry& e : peaks.entries())
        os << e.n << "," << fmt_double(e.area) << "," << fmt_double(e.err) << "\n";
    if (!os) throw ValidationError("write failed on '" + path + "'");
}

PeakSeries read_peaks(const std::string& path) {
    std::ifstream is = open_in(path);
    std::optional<std::int64_t> period;
    std::vector<PeakEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            if (const auto kv = parse_meta_comment(t))
                if (kv->first == "period_ps") period = parse_int(kv->second, path, "period_ps");
            continue;
        }
        const std::vector<std::string> cols = split(t, ',');
        if (cols.size() != 3) throw FormatError(path + ": expected 'n,area,err' row");
        PeakEntry e;
        e.n = static_cast<int>(parse_int(trim(cols[0]), path, "peak index"));
        e.area = parse_double(trim(cols[1]), path, "area");
        e.err = parse_double(trim(cols[2]), path, "err");
        entries.push_back(e);
    }
    if (!period) throw FormatError(path + ": missing mandatory header key period_ps");
    try {
        return PeakSeries(std::move(entries), *period);
    } catch (const ValidationError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_fit_result(const std::string& path, const FitResult& result,
                      const std::map<std::string, std::string>& metadata) {
    std::ofstream os = open_out(path);
    write_meta_lines(os, metadata);
    for (const auto& [name, value] : result.params) {
        const auto it = result.stderrs.find(name);
        const double err = it != result.stderrs.end() ? it->second : 0.0;
        os << name << "," << fmt_double(value) << "," << fmt_double(err) << "\n";
    }
    os << "converged," << (result.converged ? 1 : 0) << "\n";
    os << "n_iter," << result.n_iter << "\n";
    os << "residual_norm," << fmt_double(result.residual_norm) << "\n";
    if (!os) throw ValidationError("write failed on '" + path + "'");
}

std::string file_digest(const std::string& path) {
    std::ifstream is = open_in(path);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    char buf[65536];
    while (is) {
        is.read(buf, sizeof(buf));
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ull;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
    return out;
}

}  // namespace cascade
