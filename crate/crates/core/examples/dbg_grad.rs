use ntf4::autodiff::{Tape, Tensor};
use ntf4::field::{FieldConfig, RadianceField};

fn main() {
    let field = RadianceField::<f64>::new(
        FieldConfig { width: 8, depth: 3, skip_at: 2, pos_bands: 3, pos_sigma: 8.0, dir_bands: 2, dir_sigma: 4.0, include_input: true }, 21);
    // direct field eval at a few points
    let pts = vec![0.1, 0.2, -3.0,  1.0, -1.0, -4.0,  0.0, 0.0, -2.5];
    let dirs = vec![0.0, 0.0, -1.0,  0.0, 0.0, -1.0,  0.1, 0.0, -0.99];
    let (density, rgb) = field.eval(&pts, &dirs);
    println!("density = {density:?}");
    println!("rgb = {rgb:?}");

    // check the trunk pre-activation by hand through a tape
    let mut tape = Tape::<f64>::new();
    let fb = field.params.bind(&mut tape);
    let p = tape.constant(Tensor::from_vec(vec![3, 3], pts));
    let d = tape.constant(Tensor::from_vec(vec![3, 3], dirs));
    let (dd, _rr) = field.forward_on_tape(&mut tape, &fb, p, d);
    println!("density via tape = {:?}", tape.value(dd).to_vec());
}
