//! Structural Verilog emission.
//!
//! Cells become continuous assignments, flops share one clocked block with
//! a synchronous active-high reset. Net `n` is written as wire `n<id>`, so
//! the text is a pure function of the netlist.

use std::fmt::Write;

use super::{CellKind, Driver, NetId, Netlist};

pub fn emit_verilog(n: &Netlist, module_name: &str) -> String {
    let drivers = n.drivers();
    let net = |id: NetId| -> String {
        match drivers[id.index()] {
            Driver::Const(b) => format!("1'b{}", b as u8),
            Driver::Input { bus, bit } => {
                let b = &n.inputs()[bus];
                if b.width() == 1 {
                    b.name.clone()
                } else {
                    format!("{}[{bit}]", b.name)
                }
            }
            _ => id.to_string(),
        }
    };

    let mut v = String::new();
    let mut ports = vec!["    input wire clk".to_string(), "    input wire rst".to_string()];
    let range = |w: usize| if w == 1 { String::new() } else { format!("[{}:0] ", w - 1) };
    for b in n.inputs() {
        ports.push(format!("    input wire {}{}", range(b.width()), b.name));
    }
    for b in n.outputs() {
        ports.push(format!("    output wire {}{}", range(b.width()), b.name));
    }
    let _ = writeln!(v, "module {module_name} (\n{}\n);", ports.join(",\n"));

    for c in n.cells() {
        let _ = writeln!(v, "    wire {};", c.output);
    }
    for f in n.flops() {
        let _ = writeln!(v, "    reg {};", f.q);
    }
    for c in n.cells() {
        let a = |k: usize| net(c.inputs[k]);
        let expr = match c.kind {
            CellKind::Inv => format!("~{}", a(0)),
            CellKind::Buf => a(0),
            CellKind::And2 => format!("{} & {}", a(0), a(1)),
            CellKind::Or2 => format!("{} | {}", a(0), a(1)),
            CellKind::Nand2 => format!("~({} & {})", a(0), a(1)),
            CellKind::Nor2 => format!("~({} | {})", a(0), a(1)),
            CellKind::Xor2 => format!("{} ^ {}", a(0), a(1)),
            CellKind::Xnor2 => format!("~({} ^ {})", a(0), a(1)),
            CellKind::Mux2 => format!("{} ? {} : {}", a(2), a(1), a(0)),
        };
        let _ = writeln!(v, "    assign {} = {expr};", c.output);
    }
    for b in n.outputs() {
        let rhs = if b.width() == 1 {
            net(b.nets[0])
        } else {
            let bits: Vec<String> = b.nets.iter().rev().map(|&x| net(x)).collect();
            format!("{{{}}}", bits.join(", "))
        };
        let _ = writeln!(v, "    assign {} = {rhs};", b.name);
    }
    if !n.flops().is_empty() {
        v.push_str("    always @(posedge clk) begin\n        if (rst) begin\n");
        for f in n.flops() {
            let _ = writeln!(v, "            {} <= 1'b0;", f.q);
        }
        v.push_str("        end else begin\n");
        for f in n.flops() {
            let _ = writeln!(v, "            {} <= {};", f.q, net(f.d));
        }
        v.push_str("        end\n    end\n");
    }
    v.push_str("endmodule\n");
    v
}
