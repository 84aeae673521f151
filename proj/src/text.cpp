#include "collapse_lab/text.hpp"

#include <cctype>

namespace clab::text {
namespace {

std::size_t utf8_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

char32_t decode_at(std::string_view s, std::size_t i, std::size_t len) {
    auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]); };
    switch (len) {
    case 2: return ((b(0) & 0x1F) << 6) | (b(1) & 0x3F);
    case 3: return ((b(0) & 0x0F) << 12) | ((b(1) & 0x3F) << 6) | (b(2) & 0x3F);
    case 4: return ((b(0) & 0x07) << 18) | ((b(1) & 0x3F) << 12) | ((b(2) & 0x3F) << 6) | (b(3) & 0x3F);
    default: return b(0);
    }
}

bool is_space(char32_t c) {
    if (c < 0x80) return std::isspace(static_cast<int>(c)) != 0;
    return c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
           c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80) return std::ispunct(static_cast<int>(c)) != 0;
    // General punctuation block, Latin-1 punctuation and CJK full stops.
    return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || c == 0xA1 || c == 0xAB ||
           c == 0xBB || c == 0xBF || c == 0x3001 || c == 0x3002;
}

struct Cp {
    std::size_t pos;
    std::size_t len;
    char32_t value;
};

std::vector<Cp> decode(std::string_view s) {
    std::vector<Cp> out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        std::size_t len = utf8_len(static_cast<unsigned char>(s[i]));
        if (i + len > s.size()) len = 1;
        out.push_back({i, len, decode_at(s, i, len)});
        i += len;
    }
    return out;
}

} // namespace

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    const auto cps = decode(s);
    std::size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && is_space(cps[i].value)) ++i;
        std::size_t j = i;
        while (j < cps.size() && !is_space(cps[j].value)) ++j;
        std::size_t lo = i, hi = j;
        while (lo < hi && is_punct(cps[lo].value)) ++lo;
        while (hi > lo && is_punct(cps[hi - 1].value)) --hi;
        if (lo < hi) {
            const std::size_t begin = cps[lo].pos;
            const std::size_t end = cps[hi - 1].pos + cps[hi - 1].len;
            std::string tok(s.substr(begin, end - begin));
            for (char& ch : tok) {
                if (static_cast<unsigned char>(ch) < 0x80) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            }
            tokens.push_back(std::move(tok));
        }
        i = j;
    }
    return tokens;
}

std::size_t char_count(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++n) {
        std::size_t len = utf8_len(static_cast<unsigned char>(s[i]));
        i += (i + len > s.size()) ? 1 : len;
    }
    return n;
}

std::string_view prefix_chars(std::string_view s, std::size_t n) {
    std::size_t i = 0;
    for (std::size_t c = 0; c < n && i < s.size(); ++c) {
        std::size_t len = utf8_len(static_cast<unsigned char>(s[i]));
        i += (i + len > s.size()) ? 1 : len;
    }
    return s.substr(0, i);
}

} // namespace clab::text
