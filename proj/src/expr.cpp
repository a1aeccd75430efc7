#include "ltime/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "ltime/errors.hpp"

namespace ltime {

std::string DomainError::format_x(double x) {
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), res.ptr);
}

}  // namespace ltime

namespace ltime::expr {

NodePtr make_literal(double v) { return std::make_shared<const Node>(Node{Literal{v}}); }
NodePtr make_variable() { return std::make_shared<const Node>(Node{Variable{}}); }
NodePtr make_constant(Constant c) { return std::make_shared<const Node>(Node{NamedConstant{c}}); }
NodePtr make_negate(NodePtr operand) {
    return std::make_shared<const Node>(Node{Negate{std::move(operand)}});
}
NodePtr make_binary(BinaryOp op, NodePtr lhs, NodePtr rhs) {
    return std::make_shared<const Node>(Node{Binary{op, std::move(lhs), std::move(rhs)}});
}
NodePtr make_call(Function fn, NodePtr arg) {
    return std::make_shared<const Node>(Node{Call{fn, std::move(arg)}});
}

namespace {

constexpr std::array<std::pair<std::string_view, Function>, 8> kFunctions{{
    {"exp", Function::Exp},
    {"log", Function::Log},
    {"sqrt", Function::Sqrt},
    {"abs", Function::Abs},
    {"sin", Function::Sin},
    {"cos", Function::Cos},
    {"atan", Function::Atan},
    {"step", Function::Step},
}};

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr parse_all() {
        skip_space();
        if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
        NodePtr root = parse_sum();
        skip_space();
        if (pos_ != text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        return root;
    }

private:
    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ == text_.size()) throw ParseError(std::string("expected '") + c + "', found end of input", pos_);
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
    }

    NodePtr parse_sum() {
        NodePtr lhs = parse_product();
        for (;;) {
            if (accept('+')) lhs = make_binary(BinaryOp::Add, lhs, parse_product());
            else if (accept('-')) lhs = make_binary(BinaryOp::Sub, lhs, parse_product());
            else return lhs;
        }
    }

    NodePtr parse_product() {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (accept('*')) lhs = make_binary(BinaryOp::Mul, lhs, parse_unary());
            else if (accept('/')) lhs = make_binary(BinaryOp::Div, lhs, parse_unary());
            else return lhs;
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return make_negate(parse_unary());
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_primary();
        if (accept('^')) return make_binary(BinaryOp::Pow, base, parse_unary());
        return base;
    }

    NodePtr parse_primary() {
        skip_space();
        if (pos_ == text_.size()) throw ParseError("unexpected end of input", pos_);
        char c = text_[pos_];
        if (is_digit(c) || c == '.') return parse_number();
        if (c == '(') {
            ++pos_;
            NodePtr inner = parse_sum();
            expect(')');
            return inner;
        }
        if (is_ident_start(c)) return parse_identifier();
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    NodePtr parse_number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && is_digit(text_[pos_])) {
                while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
            } else {
                pos_ = save;
            }
        }
        double value = 0.0;
        auto res = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != text_.data() + pos_ || !std::isfinite(value))
            throw ParseError("malformed number", start);
        return make_literal(value);
    }

    NodePtr parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        std::string_view name = text_.substr(start, pos_ - start);
        if (name == "x") return make_variable();
        if (name == "pi") return make_constant(Constant::Pi);
        if (name == "e") return make_constant(Constant::E);
        for (auto [fname, fn] : kFunctions) {
            if (fname == name) {
                expect('(');
                NodePtr arg = parse_sum();
                expect(')');
                return make_call(fn, arg);
            }
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

// Binding strength used by the printer; higher binds tighter.
int precedence(const Node& n) {
    return std::visit(overloaded{
                          [](const Binary& b) {
                              switch (b.op) {
                                  case BinaryOp::Add:
                                  case BinaryOp::Sub: return 1;
                                  case BinaryOp::Mul:
                                  case BinaryOp::Div: return 2;
                                  case BinaryOp::Pow: return 4;
                              }
                              return 0;
                          },
                          [](const Negate&) { return 3; },
                          [](const auto&) { return 5; },
                      },
                      n.kind);
}

void render(const Node& n, int min_prec, std::string& out) {
    bool paren = precedence(n) < min_prec;
    if (paren) out += '(';
    std::visit(overloaded{
                   [&](const Literal& l) {
                       std::array<char, 32> buf{};
                       auto res = std::to_chars(buf.data(), buf.data() + buf.size(), l.value);
                       out.append(buf.data(), res.ptr);
                   },
                   [&](const Variable&) { out += 'x'; },
                   [&](const NamedConstant& c) { out += c.which == Constant::Pi ? "pi" : "e"; },
                   [&](const Negate& neg) {
                       out += '-';
                       render(*neg.operand, 3, out);
                   },
                   [&](const Binary& b) {
                       switch (b.op) {
                           case BinaryOp::Add:
                           case BinaryOp::Sub:
                               render(*b.lhs, 1, out);
                               out += b.op == BinaryOp::Add ? " + " : " - ";
                               render(*b.rhs, 2, out);
                               break;
                           case BinaryOp::Mul:
                           case BinaryOp::Div:
                               render(*b.lhs, 2, out);
                               out += b.op == BinaryOp::Mul ? "*" : "/";
                               render(*b.rhs, 3, out);
                               break;
                           case BinaryOp::Pow:
                               render(*b.lhs, 5, out);
                               out += '^';
                               render(*b.rhs, 3, out);
                               break;
                       }
                   },
                   [&](const Call& c) {
                       out += function_name(c.fn);
                       out += '(';
                       render(*c.arg, 0, out);
                       out += ')';
                   },
               },
               n.kind);
    if (paren) out += ')';
}

bool depends_on_x(const Node& n) {
    return std::visit(overloaded{
                          [](const Variable&) { return true; },
                          [](const Negate& neg) { return depends_on_x(*neg.operand); },
                          [](const Binary& b) { return depends_on_x(*b.lhs) || depends_on_x(*b.rhs); },
                          [](const Call& c) { return depends_on_x(*c.arg); },
                          [](const auto&) { return false; },
                      },
                      n.kind);
}

}  // namespace

std::string_view function_name(Function fn) {
    for (auto [name, f] : kFunctions)
        if (f == fn) return name;
    return "?";
}

double constant_value(Constant c) { return c == Constant::Pi ? std::numbers::pi : std::numbers::e; }

NodePtr parse(std::string_view text) { return Parser(text).parse_all(); }

std::string to_string(const Node& node) {
    std::string out;
    render(node, 0, out);
    return out;
}

bool structurally_equal(const Node& lhs, const Node& rhs) {
    if (lhs.kind.index() != rhs.kind.index()) return false;
    return std::visit(
        overloaded{
            [&](const Literal& l) { return l.value == std::get<Literal>(rhs.kind).value; },
            [&](const Variable&) { return true; },
            [&](const NamedConstant& c) { return c.which == std::get<NamedConstant>(rhs.kind).which; },
            [&](const Negate& n) { return structurally_equal(*n.operand, *std::get<Negate>(rhs.kind).operand); },
            [&](const Binary& b) {
                const auto& o = std::get<Binary>(rhs.kind);
                return b.op == o.op && structurally_equal(*b.lhs, *o.lhs) && structurally_equal(*b.rhs, *o.rhs);
            },
            [&](const Call& c) {
                const auto& o = std::get<Call>(rhs.kind);
                return c.fn == o.fn && structurally_equal(*c.arg, *o.arg);
            },
        },
        lhs.kind);
}

// ---------------------------------------------------------------------------
// Program

Program::Program(const NodePtr& root) : Program(root, true) {}

Program::Program(const NodePtr& root, bool fold) : fold_(fold) {
    keep_alive_.push_back(root);
    emit(root, 1);
}

void Program::emit(const NodePtr& node, int depth) {
    max_depth_ = std::max(max_depth_, depth);
    const Node* origin = node.get();

    if (fold_ && !std::holds_alternative<Literal>(node->kind) && !depends_on_x(*node)) {
        // Fold only if the subtree evaluates cleanly; otherwise the error must
        // surface at evaluation time against the right node.
        Program sub(node, false);
        try {
            double v = sub(0.0);
            code_.push_back({Op::Push, v, origin});
            return;
        } catch (const DomainError&) {
        }
    }

    std::visit(overloaded{
                   [&](const Literal& l) { code_.push_back({Op::Push, l.value, origin}); },
                   [&](const Variable&) { code_.push_back({Op::LoadX, 0.0, origin}); },
                   [&](const NamedConstant& c) { code_.push_back({Op::Push, constant_value(c.which), origin}); },
                   [&](const Negate& n) {
                       emit(n.operand, depth);
                       code_.push_back({Op::Neg, 0.0, origin});
                   },
                   [&](const Binary& b) {
                       emit(b.lhs, depth);
                       emit(b.rhs, depth + 1);
                       Op op = Op::Add;
                       switch (b.op) {
                           case BinaryOp::Add: op = Op::Add; break;
                           case BinaryOp::Sub: op = Op::Sub; break;
                           case BinaryOp::Mul: op = Op::Mul; break;
                           case BinaryOp::Div: op = Op::Div; break;
                           case BinaryOp::Pow: op = Op::Pow; break;
                       }
                       code_.push_back({op, 0.0, origin});
                   },
                   [&](const Call& c) {
                       emit(c.arg, depth);
                       Op op = Op::Exp;
                       switch (c.fn) {
                           case Function::Exp: op = Op::Exp; break;
                           case Function::Log: op = Op::Log; break;
                           case Function::Sqrt: op = Op::Sqrt; break;
                           case Function::Abs: op = Op::Abs; break;
                           case Function::Sin: op = Op::Sin; break;
                           case Function::Cos: op = Op::Cos; break;
                           case Function::Atan: op = Op::Atan; break;
                           case Function::Step: op = Op::Step; break;
                       }
                       code_.push_back({op, 0.0, origin});
                   },
               },
               node->kind);
}

void Program::fail(const char* reason, const Instr& at, double x) const {
    throw DomainError(reason, to_string(*at.origin), x);
}

double Program::operator()(double x) const {
    if (is_constant()) return code_[0].value;
    constexpr int kInline = 32;
    std::array<double, kInline> inline_stack{};
    std::vector<double> heap_stack;
    double* stack = inline_stack.data();
    if (max_depth_ > kInline) {
        heap_stack.resize(static_cast<std::size_t>(max_depth_));
        stack = heap_stack.data();
    }
    int top = -1;

    for (const Instr& in : code_) {
        double r = 0.0;
        switch (in.op) {
            case Op::Push: stack[++top] = in.value; continue;
            case Op::LoadX: stack[++top] = x; continue;
            case Op::Neg: stack[top] = -stack[top]; continue;
            case Op::Add: r = stack[top - 1] + stack[top]; --top; break;
            case Op::Sub: r = stack[top - 1] - stack[top]; --top; break;
            case Op::Mul: r = stack[top - 1] * stack[top]; --top; break;
            case Op::Div:
                if (stack[top] == 0.0) fail("division by zero", in, x);
                r = stack[top - 1] / stack[top];
                --top;
                break;
            case Op::Pow: {
                double base = stack[top - 1], ex = stack[top];
                if (base < 0.0 && std::floor(ex) != ex) fail("negative base with non-integer exponent", in, x);
                if (base == 0.0 && ex < 0.0) fail("division by zero", in, x);
                r = std::pow(base, ex);
                --top;
                break;
            }
            case Op::Exp: r = std::exp(stack[top]); break;
            case Op::Log:
                if (stack[top] <= 0.0) fail("log of non-positive argument", in, x);
                r = std::log(stack[top]);
                break;
            case Op::Sqrt:
                if (stack[top] < 0.0) fail("sqrt of negative argument", in, x);
                r = std::sqrt(stack[top]);
                break;
            case Op::Abs: r = std::fabs(stack[top]); break;
            case Op::Sin: r = std::sin(stack[top]); break;
            case Op::Cos: r = std::cos(stack[top]); break;
            case Op::Atan: r = std::atan(stack[top]); break;
            case Op::Step: r = stack[top] >= 0.0 ? 1.0 : 0.0; break;
        }
        if (!std::isfinite(r)) fail("non-finite result", in, x);
        stack[top] = r;
    }
    return stack[0];
}

// ---------------------------------------------------------------------------
// Expr

Expr::Expr(std::string_view text) : Expr(parse(text)) { source_ = std::string(text); }

Expr::Expr(NodePtr root)
    : root_(std::move(root)), source_(to_string(*root_)), program_(std::make_shared<const Program>(root_)) {}

namespace {

void collect_jumps(const NodePtr& node, std::vector<double>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Negate>) {
                collect_jumps(n.operand, out);
            } else if constexpr (std::is_same_v<T, Binary>) {
                collect_jumps(n.lhs, out);
                collect_jumps(n.rhs, out);
            } else if constexpr (std::is_same_v<T, Call>) {
                collect_jumps(n.arg, out);
                if (n.fn != Function::Step) return;
                const Expr arg(n.arg);
                if (arg.is_constant()) return;
                try {
                    const double g0 = arg(0.0), g1 = arg(1.0), gm = arg(-1.0), g3 = arg(3.5);
                    const double slope = g1 - g0;
                    const double scale = std::fabs(g0) + std::fabs(g1) + std::fabs(gm) + std::fabs(g3);
                    if (slope == 0.0 || std::fabs(g1 + gm - 2.0 * g0) > 1e-12 * scale ||
                        std::fabs(g3 - g0 - 3.5 * slope) > 1e-12 * scale)
                        return;
                    out.push_back(-g0 / slope);
                } catch (const Error&) {
                }
            }
        },
        node->kind);
}

}  // namespace

std::vector<double> jump_points(const Expr& e) {
    std::vector<double> out;
    collect_jumps(e.root_ptr(), out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace ltime::expr
