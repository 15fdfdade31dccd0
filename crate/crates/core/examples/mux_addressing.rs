//! Binary-tree multiplexer: gate line states for an address, the exhaustive
//! addressing check, and what a stuck branch does to a sweep.

use qpc_anomaly::mux::{
    address_to_lines, check_address, conduction_path, mux_check, Branch, DefectMap, MuxAddress, Stuck, Tree,
};

fn main() -> qpc_anomaly::Result<()> {
    for (r, c) in [(1, 1), (6, 11), (16, 16)] {
        let addr = MuxAddress::new(r, c)?;
        println!("D({r},{c}) -> {}", address_to_lines(addr).code());
    }

    let check = mux_check();
    println!(
        "\n{} contacts address {} devices, {} distinct line states, passed {}",
        check.contacts, check.addresses, check.distinct_line_states, check.passed
    );

    // a stuck-open leaf branch in the row tree shorts rows 5 and 6 together
    let defects = DefectMap::default().with(Branch::new(Tree::Row, 3, 5)?, Stuck::Open);
    for r in [5, 6, 7] {
        let addr = MuxAddress::new(r, 2)?;
        let path = conduction_path(&address_to_lines(addr), &defects);
        println!("D({r},2): {} device(s) conduct, fault {:?}", path.len(), check_address(addr, &defects));
    }
    let depleted = DefectMap::default().with(Branch::new(Tree::Column, 0, 1)?, Stuck::Depleted);
    let dead = MuxAddress::all().filter(|&a| check_address(a, &depleted).is_some()).count();
    println!("stuck-depleted column root branch cuts off {dead} addresses");
    Ok(())
}
