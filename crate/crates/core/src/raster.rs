/// Interleaved multi-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn new(width: u32, height: u32, channels: usize, fill: T) -> Self {
        assert!(channels > 0);
        Raster { width, height, channels, data: vec![fill; width as usize * height as usize * channels] }
    }

    /// Returns `None` if `data` does not hold `width * height * channels` values.
    pub fn from_vec(width: u32, height: u32, channels: usize, data: Vec<T>) -> Option<Self> {
        (channels > 0 && data.len() == width as usize * height as usize * channels)
            .then_some(Raster { width, height, channels, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    fn offset(&self, col: u32, row: u32) -> usize {
        debug_assert!(col < self.width && row < self.height);
        (row as usize * self.width as usize + col as usize) * self.channels
    }

    #[inline]
    pub fn pixel(&self, col: u32, row: u32) -> &[T] {
        let o = self.offset(col, row);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, col: u32, row: u32) -> &mut [T] {
        let o = self.offset(col, row);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[T] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_at_mut(&mut self, index: usize) -> &mut [T] {
        let c = self.channels;
        &mut self.data[index * c..(index + 1) * c]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.channels)
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, channel: usize) -> Vec<T> {
        self.pixels().map(|p| p[channel]).collect()
    }
}
