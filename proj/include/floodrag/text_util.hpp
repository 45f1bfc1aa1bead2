// Copyright 2026 The floodrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace floodrag::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

/// Whitespace-delimited token count.
std::size_t word_count(std::string_view s);

/// Splits on ". ", "! " and "? " and trims each piece; empty pieces dropped.
std::vector<std::string> split_sentences(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

/// Positions of `needle` in `hay` where both ends fall on word boundaries.
/// A trailing plural "s" is tolerated at the right edge.
std::vector<std::size_t> find_words(std::string_view hay, std::string_view needle);

/// printf-style fixed formatting ("%.4f").
std::string fixed(double value, int decimals);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace floodrag::text
