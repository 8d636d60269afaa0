#pragma once

#include <memory>
#include <string>

#include "truncllt/linalg.hpp"

namespace truncllt {

// Parsed arithmetic expression over coordinates x1..xd. Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := ['-'] primary
//   primary:= number | 'x'<k> | fn '(' expr ')' | '(' expr ')'
//   fn     := sin | cos | tanh | exp
class Expr {
public:
    static Expr parse(const std::string& text, std::size_t d);
    double eval(const Vec& x) const;

    Expr() = default;

    struct Node;  // exposed for the parser implementation

private:
    std::shared_ptr<const Node> root_;
};

struct ExprError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace truncllt
