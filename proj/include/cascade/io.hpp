#pragma once

#include <map>
#include <string>

#include "cascade/types.hpp"

namespace cascade {

enum class TagFormat { binary, text };

// Binary container: 16-byte header (magic "CLTG", u16 version=1, u16
// channel_count, u64 duration_ps), then 16-byte records (u64 t_ps, u16
// channel, 6 reserved zero bytes), all little-endian. Since the layout has no
// metadata room, provenance for binary writes goes to a `<path>.meta` text
// sidecar; the text format ("channel<TAB>t_ps" lines) embeds it as
// `# key=value` comments along with duration_ps and channel_count.
void write_tags(const std::string& path, const TagStream& stream,
                TagFormat format = TagFormat::binary,
                const std::map<std::string, std::string>& metadata = {});

// Sniffs the magic to pick the format. Validates magic/version/record layout
// (format error) and tag ordering (integrity error naming the first offending
// record index).
TagStream read_tags(const std::string& path);

// Text histogram: `# key=value` header (bin_width_ps, tau_min_ps, optional
// norm, free-form provenance), then "tau_center_ps,count" rows in bin order.
// Counts round-trip through %.17g exactly.
void write_histogram(const std::string& path, const Histogram& hist);
Histogram read_histogram(const std::string& path);

// Text peak series: `# period_ps=...` header plus provenance, then
// "n,area,err" rows.
void write_peaks(const std::string& path, const PeakSeries& peaks,
                 const std::map<std::string, std::string>& metadata = {});
PeakSeries read_peaks(const std::string& path);

// Fit result as `# key=value` provenance plus "name,value,stderr" parameter
// rows and summary rows (converged, n_iter, residual_norm).
void write_fit_result(const std::string& path, const FitResult& result,
                      const std::map<std::string, std::string>& metadata = {});

// FNV-1a 64 of a file's bytes, as 16 hex digits; the digest stamped into
// provenance metadata for inputs.
std::string file_digest(const std::string& path);

}  // namespace cascade
