#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mixfit {

// Splits `name(k=v,k=v)` (lower-cased, whitespace removed) into the name and its
// key/value pairs. A bare item without `=` is returned with an empty value.
std::pair<std::string, std::vector<std::pair<std::string, std::string>>> split_call(
    std::string_view spec);

}  // namespace mixfit
