#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace iat::linkfmt {

// RFC 6690 subset: URI references plus simple target attributes.
// Flag attributes (no value) carry an empty string.
struct Link {
    std::string target;  // "/16663/0"
    std::map<std::string, std::string> attrs;

    friend bool operator==(const Link&, const Link&) = default;
};

std::string render(const std::vector<Link>& links);
std::vector<Link> parse(std::string_view text);

}  // namespace iat::linkfmt
