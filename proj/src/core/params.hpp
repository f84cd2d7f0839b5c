#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"

namespace ivusseg {

// Named map of trainable leaves (conv kernels, biases, PReLU alphas) in
// registration order. One writer: the optimizer step.
class ParamStore {
public:
    NodePtr add(const std::string& name, Tensor init);
    NodePtr get(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return items_.size(); }
    const std::vector<std::pair<std::string, NodePtr>>& items() const { return items_; }

    // Total trainable element count.
    std::size_t param_count() const;
    void zero_grads();

private:
    std::vector<std::pair<std::string, NodePtr>> items_;
    std::map<std::string, std::size_t> index_;
};

} // namespace ivusseg
