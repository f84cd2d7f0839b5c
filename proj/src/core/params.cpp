#include "params.hpp"

namespace ivusseg {

NodePtr ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name))
        throw Error("ParamStore: duplicate parameter '" + name + "'");
    auto node = graph::leaf(std::move(init), name);
    index_[name] = items_.size();
    items_.emplace_back(name, node);
    return node;
}

NodePtr ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw Error("ParamStore: unknown parameter '" + name + "'");
    return items_[it->second].second;
}

std::size_t ParamStore::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, node] : items_) n += node->value.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, node] : items_) node->zero_grad();
}

} // namespace ivusseg
