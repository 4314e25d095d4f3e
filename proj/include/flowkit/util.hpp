#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace flowkit::util {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

std::string to_lower(std::string_view s);

/// Lowercased alphanumeric tokens; everything else is a separator.
std::vector<std::string> tokenize(std::string_view s);
std::set<std::string> token_set(std::string_view s);

/// |A∩B| / min(|A|,|B|); 1.0 when either set is empty only if both are.
double overlap_coefficient(const std::set<std::string>& a, const std::set<std::string>& b);

/// Binary token-set cosine similarity: |A∩B| / sqrt(|A||B|).
double token_cosine(std::string_view a, std::string_view b);

/// Shortest round-trip decimal form (integral values keep one decimal).
std::string format_number(double v);

std::string read_text_file(const std::string& path);
bool file_exists(const std::string& path);

/// Writes to a sibling temp file, then renames over the target.
void write_text_file_atomic(const std::string& path, const std::string& content);

/// True when every field of `part` appears in `whole` with an equal value
/// (objects recurse; arrays of `part` must be a prefix of `whole`'s).
bool is_json_subset(const nlohmann::json& part, const nlohmann::json& whole);

std::string join_path(const std::string& dir, const std::string& leaf);
std::string parent_dir(const std::string& path);

/// Whitespace-separated tokens with double-quoted strings; '#' starts a comment.
std::vector<std::string> split_script_line(const std::string& line);

}  // namespace flowkit::util
