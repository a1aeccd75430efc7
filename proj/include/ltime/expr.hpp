#pragma once

// Scalar expressions in one variable `x`, used for the coefficients a(x), b(x)
// and for integrands f(x).
//
// Grammar (lowest to highest precedence):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          right-associative
//   primary := number | 'x' | 'pi' | 'e' | name '(' sum ')' | '(' sum ')'
//
// Functions: exp log sqrt abs sin cos atan step, where step(v) = 1 for v >= 0
// and 0 otherwise.

#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ltime::expr {

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Function { Exp, Log, Sqrt, Abs, Sin, Cos, Atan, Step };
enum class Constant { Pi, E };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Literal {
    double value;
};
struct Variable {};
struct NamedConstant {
    Constant which;
};
struct Negate {
    NodePtr operand;
};
struct Binary {
    BinaryOp op;
    NodePtr lhs;
    NodePtr rhs;
};
struct Call {
    Function fn;
    NodePtr arg;
};

struct Node {
    std::variant<Literal, Variable, NamedConstant, Negate, Binary, Call> kind;
};

NodePtr make_literal(double v);
NodePtr make_variable();
NodePtr make_constant(Constant c);
NodePtr make_negate(NodePtr operand);
NodePtr make_binary(BinaryOp op, NodePtr lhs, NodePtr rhs);
NodePtr make_call(Function fn, NodePtr arg);

std::string_view function_name(Function fn);
double constant_value(Constant c);

NodePtr parse(std::string_view text);

// Minimal-parenthesis rendering that reparses to the same tree.
std::string to_string(const Node& node);

bool structurally_equal(const Node& lhs, const Node& rhs);

// Flat postfix program compiled from a tree. Constant subtrees are folded at
// compile time only when folding cannot raise a domain error.
class Program {
public:
    explicit Program(const NodePtr& root);

    double operator()(double x) const;

    bool is_constant() const noexcept { return code_.size() == 1 && code_[0].op == Op::Push; }
    std::size_t size() const noexcept { return code_.size(); }

private:
    Program(const NodePtr& root, bool fold);

    enum class Op : unsigned char {
        Push, LoadX, Neg, Add, Sub, Mul, Div, Pow,
        Exp, Log, Sqrt, Abs, Sin, Cos, Atan, Step
    };
    struct Instr {
        Op op;
        double value;
        const Node* origin;
    };

    void emit(const NodePtr& node, int depth);
    [[noreturn]] void fail(const char* reason, const Instr& at, double x) const;

    std::vector<Instr> code_;
    std::vector<NodePtr> keep_alive_;
    int max_depth_ = 0;
    bool fold_ = true;
};

// Parsed and compiled expression. Immutable and cheap to copy.
class Expr {
public:
    explicit Expr(std::string_view text);
    explicit Expr(NodePtr root);

    double operator()(double x) const { return (*program_)(x); }

    const Node& root() const noexcept { return *root_; }
    const NodePtr& root_ptr() const noexcept { return root_; }
    const std::string& source() const noexcept { return source_; }
    bool is_constant() const noexcept { return program_->is_constant(); }

private:
    NodePtr root_;
    std::string source_;
    std::shared_ptr<const Program> program_;
};

// Points where a step() factor switches, for step arguments affine in x.
// Sorted and unique. Steps of non-affine arguments are not located.
std::vector<double> jump_points(const Expr& e);

}  // namespace ltime::expr
