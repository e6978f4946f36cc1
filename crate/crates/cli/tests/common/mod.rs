pub mod exact_moyal;
