pub mod baseline_arx;
pub mod check_physics;
pub mod evaluate;
pub mod generate_building;
pub mod generate_gas;
pub mod train;
