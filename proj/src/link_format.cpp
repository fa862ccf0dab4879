#include "iat/link_format.hpp"

#include "iat/errors.hpp"

namespace iat::linkfmt {

std::string render(const std::vector<Link>& links) {
    std::string out;
    for (const auto& link : links) {
        if (!out.empty()) out += ",";
        out += "<" + link.target + ">";
        for (const auto& [key, value] : link.attrs) {
            out += ";" + key;
            if (!value.empty()) out += "=\"" + value + "\"";
        }
    }
    return out;
}

std::vector<Link> parse(std::string_view text) {
    std::vector<Link> links;
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    };
    while (pos < text.size()) {
        skip_ws();
        if (pos >= text.size()) break;
        if (text[pos] != '<') throw ParseError(0, "link-format: expected '<'");
        auto close = text.find('>', pos);
        if (close == std::string_view::npos) throw ParseError(0, "link-format: missing '>'");
        Link link;
        link.target = std::string(text.substr(pos + 1, close - pos - 1));
        pos = close + 1;
        while (pos < text.size() && text[pos] == ';') {
            ++pos;
            std::size_t start = pos;
            while (pos < text.size() && text[pos] != '=' && text[pos] != ';' && text[pos] != ',') {
                ++pos;
            }
            std::string key(text.substr(start, pos - start));
            std::string value;
            if (pos < text.size() && text[pos] == '=') {
                ++pos;
                if (pos < text.size() && text[pos] == '"') {
                    ++pos;
                    std::size_t vstart = pos;
                    while (pos < text.size() && text[pos] != '"') ++pos;
                    if (pos >= text.size()) throw ParseError(0, "link-format: unterminated quote");
                    value = std::string(text.substr(vstart, pos - vstart));
                    ++pos;
                } else {
                    std::size_t vstart = pos;
                    while (pos < text.size() && text[pos] != ';' && text[pos] != ',') ++pos;
                    value = std::string(text.substr(vstart, pos - vstart));
                }
            }
            link.attrs[key] = value;
        }
        links.push_back(std::move(link));
        skip_ws();
        if (pos < text.size()) {
            if (text[pos] != ',') throw ParseError(0, "link-format: expected ','");
            ++pos;
        }
    }
    return links;
}

}  // namespace iat::linkfmt
