// SPDX-License-Identifier: Apache-2.0
//
// railchan - ray-tracing channel simulation for railway mmWave scenarios
// Copyright (C) 2026 The railchan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <stdexcept>
#include <string>

namespace railchan
{
    // Precondition on a numeric argument violated (distance <= 0, angle out of range, ...)
    struct domain_error : std::domain_error
    {
        using std::domain_error::domain_error;
    };

    // Invalid user-facing specification or configuration
    struct validation_error : std::invalid_argument
    {
        using std::invalid_argument::invalid_argument;
    };

    // Malformed input file; line is 1-based, 0 when unknown
    struct parse_error : std::runtime_error
    {
        parse_error(const std::string &msg, std::size_t line_no)
            : std::runtime_error(line_no ? "line " + std::to_string(line_no) + ": " + msg : msg), line(line_no) {}
        std::size_t line;
    };

    // Name could not be resolved (unknown material, ...)
    struct resolution_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    // Id lookup failed
    struct lookup_error : std::out_of_range
    {
        using std::out_of_range::out_of_range;
    };

    // Scene lacks the object classes a rule depends on
    struct classification_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    // Degenerate regression / distribution fit
    struct fit_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    // Not enough data for a statistical estimate
    struct estimation_error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };
}
