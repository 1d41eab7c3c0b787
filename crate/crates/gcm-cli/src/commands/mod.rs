pub mod backtest;
pub mod duplicate;
pub mod eigs;
pub mod estimate;
pub mod fcm;
pub mod simulate;
