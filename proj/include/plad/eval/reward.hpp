#pragma once

#include <string>
#include <string_view>

namespace plad::eval {

// Scores a response to a prompt. Implementations must be deterministic.
class RewardModel {
public:
    virtual ~RewardModel() = default;
    virtual double score(std::string_view prompt, std::string_view response) const = 0;
    virtual std::string name() const = 0;
};

}  // namespace plad::eval
