use proptest::prelude::*;
use sage_pddl::*;

const TYPES: [&str; 3] = ["t0", "t1", "t2"];

#[derive(Debug, Clone)]
struct Shape {
    parents: Vec<Option<usize>>,
    predicate_types: Vec<Vec<usize>>,
    function_types: Vec<Vec<usize>>,
    constant_types: Vec<usize>,
    operators: Vec<OpShape>,
}

#[derive(Debug, Clone)]
struct OpShape {
    params: Vec<usize>,
    pre: Vec<(usize, bool, Vec<usize>)>,
    adds: Vec<(usize, bool, Vec<usize>)>,
    numeric: Vec<(u8, usize, Vec<usize>, (i64, u32))>,
    compare: Vec<(u8, usize, Vec<usize>, (i64, u32))>,
}

fn number((num, twos): (i64, u32)) -> Number {
    Number::new(num, 2i64.pow(twos))
}

fn op_shape() -> impl Strategy<Value = OpShape> {
    (
        prop::collection::vec(0usize..3, 0..4),
        prop::collection::vec((0usize..4, any::<bool>(), prop::collection::vec(0usize..8, 2)), 0..4),
        prop::collection::vec((0usize..4, any::<bool>(), prop::collection::vec(0usize..8, 2)), 0..4),
        prop::collection::vec((0u8..3, 0usize..2, prop::collection::vec(0usize..8, 1), (-40i64..40, 0u32..3)), 0..3),
        prop::collection::vec((0u8..5, 0usize..2, prop::collection::vec(0usize..8, 1), (-40i64..40, 0u32..3)), 0..3),
    )
        .prop_map(|(params, pre, adds, numeric, compare)| OpShape {
            params,
            pre,
            adds,
            numeric,
            compare,
        })
}

fn shape() -> impl Strategy<Value = Shape> {
    (
        (prop::option::of(0usize..3), prop::option::of(0usize..3)),
        prop::collection::vec(prop::collection::vec(0usize..3, 0..3), 4),
        prop::collection::vec(prop::collection::vec(0usize..3, 0..2), 2),
        prop::collection::vec(0usize..3, 0..3),
        prop::collection::vec(op_shape(), 0..4),
    )
        .prop_map(|((p1, p2), predicate_types, function_types, constant_types, operators)| Shape {
            // t0 is a root; t1 and t2 may descend from an earlier type.
            parents: vec![None, p1.map(|_| 0), p2.map(|p| p % 2)],
            predicate_types,
            function_types,
            constant_types,
            operators,
        })
}

/// Picks an argument for a slot of `slot_type`: a compatible parameter if
/// one exists, else a compatible constant.
fn pick(domain: &Domain, params: &[Parameter], slot_type: &str, choice: usize) -> Option<Term> {
    let vars: Vec<_> = params
        .iter()
        .filter(|p| domain.is_subtype(&p.type_name, slot_type))
        .collect();
    if !vars.is_empty() {
        return Some(Term::var(&vars[choice % vars.len()].name));
    }
    let consts: Vec<_> = domain
        .constants
        .iter()
        .filter(|c| domain.is_subtype(&c.type_name, slot_type))
        .collect();
    if consts.is_empty() {
        None
    } else {
        Some(Term::constant(&consts[choice % consts.len()].name))
    }
}

fn args_for(domain: &Domain, params: &[Parameter], schema: &[Parameter], choices: &[usize]) -> Option<Vec<Term>> {
    schema
        .iter()
        .zip(choices.iter().cycle())
        .map(|(slot, &c)| pick(domain, params, &slot.type_name, c))
        .collect()
}

fn build(s: &Shape) -> Domain {
    let mut d = Domain {
        name: "fuzz".into(),
        requirements: vec![":typing".into(), ":numeric-fluents".into()],
        ..Domain::default()
    };
    for (i, parent) in s.parents.iter().enumerate() {
        d.types.push(TypeDecl {
            name: TYPES[i].into(),
            parent: parent.map(|p| TYPES[p].to_string()),
        });
    }
    for (i, &t) in s.constant_types.iter().enumerate() {
        d.constants.push(TypedObject::new(format!("k{i}"), TYPES[t]));
    }
    let params = |types: &[usize]| -> Vec<Parameter> {
        types
            .iter()
            .enumerate()
            .map(|(i, &t)| Parameter {
                name: format!("a{i}"),
                type_name: TYPES[t].into(),
            })
            .collect()
    };
    for (i, types) in s.predicate_types.iter().enumerate() {
        d.predicates.push(PredicateSchema {
            name: format!("p{i}"),
            parameters: params(types),
        });
    }
    for (i, types) in s.function_types.iter().enumerate() {
        d.functions.push(FunctionSchema {
            name: format!("f{i}"),
            parameters: params(types),
        });
    }
    for (oi, o) in s.operators.iter().enumerate() {
        let op_params: Vec<Parameter> = o
            .params
            .iter()
            .enumerate()
            .map(|(i, &t)| Parameter {
                name: format!("v{i}"),
                type_name: TYPES[t].into(),
            })
            .collect();
        let mut pre = Vec::new();
        for (p, positive, choices) in &o.pre {
            if let Some(args) = args_for(&d, &op_params, &d.predicates[*p].parameters, choices) {
                let a = AtomExpr {
                    predicate: format!("p{p}"),
                    args,
                };
                pre.push(if *positive { Condition::Atom(a) } else { Condition::Not(a) });
            }
        }
        for (op, f, choices, n) in &o.compare {
            if let Some(args) = args_for(&d, &op_params, &d.functions[*f].parameters, choices) {
                let cmp = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt][*op as usize];
                let lhs = Expr::Fluent(FluentExpr {
                    function: format!("f{f}"),
                    args,
                });
                let rhs = if n.0 % 3 == 0 {
                    Expr::Binary(ArithOp::Sub, Box::new(Expr::Number(number(*n))), Box::new(lhs.clone()))
                } else {
                    Expr::Number(number(*n))
                };
                pre.push(Condition::Compare(Comparison { op: cmp, lhs, rhs }));
            }
        }
        let mut effects: Vec<Effect> = Vec::new();
        for (p, add, choices) in &o.adds {
            if let Some(args) = args_for(&d, &op_params, &d.predicates[*p].parameters, choices) {
                let a = AtomExpr {
                    predicate: format!("p{p}"),
                    args,
                };
                let conflict = effects.iter().any(|e| match e {
                    Effect::Add(x) | Effect::Delete(x) => *x == a,
                    _ => false,
                });
                if !conflict {
                    effects.push(if *add { Effect::Add(a) } else { Effect::Delete(a) });
                }
            }
        }
        for (op, f, choices, n) in &o.numeric {
            if let Some(args) = args_for(&d, &op_params, &d.functions[*f].parameters, choices) {
                let op = [NumericOp::Assign, NumericOp::Increase, NumericOp::Decrease][*op as usize];
                let value = if n.0 < 0 {
                    Expr::Neg(Box::new(Expr::Number(-number(*n))))
                } else {
                    Expr::Binary(ArithOp::Mul, Box::new(Expr::Number(number(*n))), Box::new(Expr::Number(Number::from_integer(2))))
                };
                effects.push(Effect::Numeric {
                    op,
                    target: FluentExpr {
                        function: format!("f{f}"),
                        args,
                    },
                    value,
                });
            }
        }
        d.operators.push(OperatorSchema {
            name: format!("op{oi}"),
            parameters: op_params,
            precondition: Condition::And(pre),
            effects,
        });
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_domains_parse_back_equal(s in shape()) {
        let domain = build(&s);
        validate_domain(&domain).unwrap();
        let text = domain_to_string(&domain);
        let back = parse_domain(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        prop_assert_eq!(back, domain);
    }

    #[test]
    fn printed_problems_parse_back_equal(
        s in shape(),
        objects in prop::collection::vec(0usize..3, 0..5),
        facts in prop::collection::vec((0usize..4, prop::collection::vec(0usize..8, 2)), 0..6),
        values in prop::collection::vec((-30i64..30, 1i64..7), 0..3),
    ) {
        let domain = build(&s);
        let objects: Vec<TypedObject> = objects
            .iter()
            .enumerate()
            .map(|(i, &t)| TypedObject::new(format!("o{i}"), TYPES[t]))
            .collect();
        let universe = domain.universe(&objects);
        let pick_obj = |ty: &str, c: usize| {
            let pool: Vec<_> = universe.iter().filter(|o| domain.is_subtype(&o.type_name, ty)).collect();
            (!pool.is_empty()).then(|| pool[c % pool.len()].name.clone())
        };
        let mut init = SymbolicState::new();
        let mut goal = Goal::default();
        for (p, choices) in &facts {
            let schema = &domain.predicates[*p];
            let args: Option<Vec<String>> = schema
                .parameters
                .iter()
                .zip(choices.iter().cycle())
                .map(|(slot, &c)| pick_obj(&slot.type_name, c))
                .collect();
            if let Some(args) = args {
                let atom = Atom::new(&schema.name, &args);
                if choices[0] % 2 == 0 { init.insert(atom); } else { goal.literals.push((atom, choices[1] % 2 == 0)); }
            }
        }
        for (f, (num, den)) in domain.functions.iter().zip(&values) {
            let args: Option<Vec<String>> = f.parameters.iter().map(|slot| pick_obj(&slot.type_name, 0)).collect();
            if let Some(args) = args {
                let term = FluentTerm::new(&f.name, &args);
                init.set_fluent(term.clone(), Number::new(*num, *den));
                goal.numeric.push(Goal::fluent_cmp(&term, CmpOp::Ge, *num));
            }
        }
        let problem = Problem { name: "fuzz-1".into(), domain: domain.name.clone(), objects, init, goal };
        let text = problem_to_string(&problem);
        let back = parse_problem(&text, &domain).unwrap_or_else(|e| panic!("{e}\n{text}"));
        prop_assert_eq!(back, problem);
    }
}

#[test]
fn exact_arithmetic_in_init_values() {
    let d = parse_domain("(define (domain d) (:functions (x) - number))").unwrap();
    let p = parse_problem("(define (problem q) (:domain d) (:objects) (:init (= (x) (/ 1 3))))", &d).unwrap();
    assert_eq!(p.init.fluent(&FluentTerm::new::<&str>("x", &[])), Some(Number::new(1, 3)));
}

#[test]
fn problem_with_unknown_object_rejected() {
    let d = parse_domain("(define (domain d) (:predicates (p ?x)))").unwrap();
    let err = parse_problem("(define (problem q) (:domain d) (:objects a) (:init (p b)))", &d).unwrap_err();
    assert_eq!(err, PddlError::UnknownObject("b".into()));
}

#[test]
fn problem_with_ill_typed_atom_rejected() {
    let d = parse_domain("(define (domain d) (:types cell thing) (:predicates (p ?x - cell)))").unwrap();
    let err = parse_problem("(define (problem q) (:domain d) (:objects a - thing) (:init (p a)))", &d).unwrap_err();
    assert!(matches!(err, PddlError::TypeMismatch { .. }));
}
