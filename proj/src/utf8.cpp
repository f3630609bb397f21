#include "synthpii/utf8.hpp"

#include "synthpii/error.hpp"

namespace synthpii::utf8 {

namespace {

// Returns the scalar and advances `i`; returns U+FFFFFFFF on malformed input.
constexpr char32_t kBad = 0xFFFFFFFF;

char32_t next(std::string_view s, std::size_t &i) noexcept {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        return kBad;
    }
    if (i + extra >= s.size())
        return kBad;
    for (int k = 1; k <= extra; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80)
            return kBad;
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong forms, surrogates, out of range.
    static constexpr char32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return kBad;
    i += extra + 1;
    return cp;
}

} // namespace

std::u32string decode(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = next(text, i);
        if (cp == kBad)
            throw DataError("invalid UTF-8 at byte offset " + std::to_string(i));
        out.push_back(cp);
    }
    return out;
}

void append(std::string &out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps)
        append(out, cp);
    return out;
}

bool valid(std::string_view text) noexcept {
    std::size_t i = 0;
    while (i < text.size())
        if (next(text, i) == kBad)
            return false;
    return true;
}

std::string sanitize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t at = i;
        const char32_t cp = next(text, i);
        if (cp == kBad) {
            append(out, 0xFFFD);
            i = at + 1;
        } else {
            out.append(text.substr(at, i - at));
        }
    }
    return out;
}

std::size_t length(std::string_view text) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (next(text, i) == kBad)
            throw DataError("invalid UTF-8 at byte offset " + std::to_string(i));
        ++n;
    }
    return n;
}

std::string substr(std::string_view text, std::size_t start, std::size_t end) {
    const auto cps = decode(text);
    if (start > end || end > cps.size())
        throw DataError("scalar range [" + std::to_string(start) + "," + std::to_string(end) +
                        ") out of bounds for length " + std::to_string(cps.size()));
    return encode(std::u32string_view(cps).substr(start, end - start));
}

bool is_space(char32_t cp) noexcept {
    switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_punct(char32_t cp) noexcept {
    if (cp < 0x80)
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        return true;
    default:
        // General punctuation block (dashes, quotes, bullets, ellipsis).
        return cp >= 0x2010 && cp <= 0x2027;
    }
}

bool is_word(char32_t cp) noexcept {
    if (cp < 0x80)
        return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    return !is_space(cp) && !is_punct(cp);
}

char32_t to_lower(char32_t cp) noexcept {
    return (cp >= 'A' && cp <= 'Z') ? cp + ('a' - 'A') : cp;
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    for (char &c : out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c + ('a' - 'A'));
    return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char32_t cp : decode(text)) {
        if (is_space(cp)) {
            if (!cur.empty())
                out.push_back(std::move(cur));
            cur.clear();
        } else {
            append(cur, cp);
        }
    }
    if (!cur.empty())
        out.push_back(std::move(cur));
    return out;
}

std::string_view trim(std::string_view text) noexcept {
    constexpr std::string_view ws = " \t\n\r\f\v";
    const auto b = text.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    const auto e = text.find_last_not_of(ws);
    return text.substr(b, e - b + 1);
}

} // namespace synthpii::utf8
