#include "flowkit/util.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowkit::util {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(data)));
    return std::string(buf);
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) {
        tokens.push_back(cur);
    }
    return tokens;
}

std::set<std::string> token_set(std::string_view s) {
    auto tokens = tokenize(s);
    return std::set<std::string>(tokens.begin(), tokens.end());
}

double overlap_coefficient(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() || b.empty()) {
        return (a.empty() && b.empty()) ? 1.0 : 0.0;
    }
    std::size_t common = 0;
    for (const auto& t : a) {
        if (b.count(t) != 0) {
            ++common;
        }
    }
    return static_cast<double>(common) / static_cast<double>(std::min(a.size(), b.size()));
}

double token_cosine(std::string_view a, std::string_view b) {
    auto sa = token_set(a);
    auto sb = token_set(b);
    if (sa.empty() || sb.empty()) {
        return (sa.empty() && sb.empty()) ? 1.0 : 0.0;
    }
    std::size_t common = 0;
    for (const auto& t : sa) {
        if (sb.count(t) != 0) {
            ++common;
        }
    }
    return static_cast<double>(common) /
           std::sqrt(static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
}

std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, res.ptr);
    // Keep one decimal on integral values so the grammar stays unambiguous.
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
    }
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write file: " + tmp.string());
        }
        out << content;
    }
    std::filesystem::rename(tmp, target);
}

bool is_json_subset(const nlohmann::json& part, const nlohmann::json& whole) {
    if (part.is_object()) {
        if (!whole.is_object()) {
            return false;
        }
        for (auto it = part.begin(); it != part.end(); ++it) {
            if (!whole.contains(it.key())) {
                return false;
            }
            if (!is_json_subset(it.value(), whole.at(it.key()))) {
                return false;
            }
        }
        return true;
    }
    if (part.is_array()) {
        if (!whole.is_array() || whole.size() < part.size()) {
            return false;
        }
        for (std::size_t i = 0; i < part.size(); ++i) {
            if (!is_json_subset(part[i], whole[i])) {
                return false;
            }
        }
        return true;
    }
    return part == whole;
}

std::string join_path(const std::string& dir, const std::string& leaf) {
    if (dir.empty()) {
        return leaf;
    }
    return (std::filesystem::path(dir) / leaf).string();
}

std::string parent_dir(const std::string& path) {
    return std::filesystem::path(path).parent_path().string();
}

std::vector<std::string> split_script_line(const std::string& line) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        if (std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
            continue;
        }
        if (line[i] == '#') break;
        if (line[i] == '"') {
            std::size_t end = line.find('"', i + 1);
            if (end == std::string::npos) {
                tokens.push_back(line.substr(i + 1));
                break;
            }
            tokens.push_back(line.substr(i + 1, end - i - 1));
            i = end + 1;
        } else {
            std::size_t end = i;
            while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) {
                ++end;
            }
            tokens.push_back(line.substr(i, end - i));
            i = end;
        }
    }
    return tokens;
}

}  // namespace flowkit::util
