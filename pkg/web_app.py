"""
Web Application for Underwater Image Enhancement
Flask-based API for enhancing underwater images and scoring their quality
"""

import base64
import io
import logging
import os
import time

import numpy as np
from flask import Flask, jsonify, request, send_file
from flask_cors import CORS
from flasgger import Swagger
from PIL import Image
from werkzeug.exceptions import HTTPException
from werkzeug.utils import secure_filename

import settings
from enhancer import UnderwaterEnhancer
from errors import UweError
from image_io import decode_image, to_image, to_tensor
from pipeline import build_weights, efficiency_report
from quality_metrics import full_reference_report, no_reference_report

logger = logging.getLogger(__name__)

app = Flask(__name__)

# Enable CORS for cross-origin requests (when frontend is on different server)
CORS(app, resources={
    r"/*": {
        "origins": os.environ.get('ALLOWED_ORIGINS', '*'),
        "methods": ["GET", "POST", "OPTIONS"],
        "allow_headers": ["Content-Type", "Authorization"]
    }
})

# Swagger configuration
swagger_config = {
    "headers": [],
    "specs": [
        {
            "endpoint": 'apispec',
            "route": '/apispec.json',
            "rule_filter": lambda rule: True,
            "model_filter": lambda tag: True,
        }
    ],
    "static_url_path": "/flasgger_static",
    "swagger_ui": True,
    "specs_route": "/docs"
}

swagger_template = {
    "swagger": "2.0",
    "info": {
        "title": "Underwater Image Enhancement API",
        "description": """
# Underwater Image Enhancement API

Color compensation, re-parameterized convolution backbone and global color
adjustment, plus UIQM / UCIQE / PSNR / SSIM / CIEDE2000 scoring.

### Example Request (cURL)

```bash
curl -X POST http://localhost:5000/enhance -F "file=@dive.png" -o dive_enhanced.png
curl -X POST http://localhost:5000/nr-metrics -F "file=@dive.png"
```

The served model is read from `UWE_WEIGHTS` at startup.
        """,
        "version": "1.0.0",
    },
    "basePath": "/",
    "schemes": ["http", "https"],
    "consumes": ["multipart/form-data"],
    "produces": ["application/json", "image/png"],
}

swagger = Swagger(app, config=swagger_config, template=swagger_template)

app.config['MAX_CONTENT_LENGTH'] = int(os.environ.get('MAX_CONTENT_LENGTH', 16 * 1024 * 1024))  # 16MB max file size

ALLOWED_EXTENSIONS = {'png', 'ppm', 'pnm', 'jpg', 'jpeg', 'bmp'}

_enhancer = None


def allowed_file(filename):
    return '.' in filename and filename.rsplit('.', 1)[1].lower() in ALLOWED_EXTENSIONS


def get_enhancer() -> UnderwaterEnhancer:
    """Load the served model once; fall back to passthrough weights when no file is configured."""
    global _enhancer
    if _enhancer is None:
        path = settings.weights_path()
        if os.path.exists(path):
            _enhancer = UnderwaterEnhancer(path, mode='auto')
        else:
            logger.warning("Weight file %s not found, serving passthrough weights", path)
            _enhancer = UnderwaterEnhancer(build_weights(preset='passthrough'), mode='auto')
    return _enhancer


def set_enhancer(enhancer) -> None:
    global _enhancer
    _enhancer = enhancer


def _read_upload(field: str) -> np.ndarray:
    """Decode an uploaded image in memory into an (H, W, 3) uint8 array."""
    if field not in request.files:
        raise UweError(f"No '{field}' file provided")
    file = request.files[field]
    if file.filename == '':
        raise UweError(f"No '{field}' file selected")
    if not allowed_file(file.filename):
        raise UweError(f"Unsupported image type: {file.filename}")

    return decode_image(file.read(), secure_filename(file.filename))


@app.errorhandler(UweError)
def handle_uwe_error(error):
    return jsonify({'success': False, 'error': str(error)}), 400


@app.errorhandler(Exception)
def handle_unexpected(error):
    if isinstance(error, HTTPException):
        return jsonify({'success': False, 'error': error.description}), error.code
    logger.error("Request failed: %s", error)
    return jsonify({'success': False, 'error': f'Processing error: {error}'}), 500


@app.route('/')
def index():
    """
    Service information
    ---
    tags:
      - Service
    responses:
      200:
        description: Service name, model mode and endpoints
    """
    enhancer = get_enhancer()
    return jsonify({
        'success': True,
        'service': 'underwater-enhancement',
        'weights': enhancer.source or 'passthrough (built in)',
        'mode': enhancer.weights.mode.value,
        'endpoints': ['/enhance', '/metrics', '/nr-metrics', '/model', '/docs'],
    })


@app.route('/model')
def model_info():
    """
    Efficiency report of the served model
    ---
    tags:
      - Model
    parameters:
      - name: width
        in: query
        type: integer
        default: 256
      - name: height
        in: query
        type: integer
        default: 256
    responses:
      200:
        description: Parameter counts (both forms) and FLOPs at the requested size
    """
    width = request.args.get('width', 256, type=int)
    height = request.args.get('height', 256, type=int)
    enhancer = get_enhancer()
    report = efficiency_report(enhancer.weights, height=height, width=width)
    return jsonify({'success': True, 'config': enhancer.config.to_dict(), **report.to_dict()})


@app.route('/enhance', methods=['POST'])
def enhance_upload():
    """
    Enhance an underwater image
    ---
    tags:
      - Enhancement
    consumes:
      - multipart/form-data
    parameters:
      - name: file
        in: formData
        type: file
        required: true
        description: PNG, PPM (P6) or JPEG image, max 16MB
      - name: format
        in: formData
        type: string
        required: false
        default: png
        enum: [png, json]
        description: |
          - **png**: enhanced image as the response body
          - **json**: base64 PNG plus timing metadata
    responses:
      200:
        description: Enhanced image
      400:
        description: Missing file, unsupported type or unreadable image
      500:
        description: Processing error
    """
    pixels = _read_upload('file')
    output_format = request.form.get('format', 'png')

    start_time = time.time()
    result = get_enhancer().enhance_pixels(pixels)
    elapsed_time = time.time() - start_time

    buffer = io.BytesIO()
    Image.fromarray(to_image(result)).save(buffer, format='PNG')
    buffer.seek(0)

    if output_format == 'json':
        return jsonify({
            'success': True,
            'width': int(pixels.shape[1]),
            'height': int(pixels.shape[0]),
            'image_png_base64': base64.b64encode(buffer.getvalue()).decode('ascii'),
            'processing_time': round(elapsed_time, 2),
            'processing_time_ms': round(elapsed_time * 1000, 2),
        })
    return send_file(buffer, mimetype='image/png', download_name='enhanced.png')


@app.route('/metrics', methods=['POST'])
def metrics_upload():
    """
    Full-reference quality report
    ---
    tags:
      - Metrics
    consumes:
      - multipart/form-data
    parameters:
      - name: ref
        in: formData
        type: file
        required: true
        description: Reference image
      - name: test
        in: formData
        type: file
        required: true
        description: Image under evaluation (same size)
    responses:
      200:
        description: PSNR, SSIM, CIEDE2000, UIQM, UCIQE and the loss breakdown
      400:
        description: Missing file or size mismatch
    """
    ref = to_tensor(_read_upload('ref'))
    test = to_tensor(_read_upload('test'))
    report = full_reference_report(ref, test)
    return jsonify({'success': True, 'report': report.to_dict()})


@app.route('/nr-metrics', methods=['POST'])
def nr_metrics_upload():
    """
    No-reference quality report
    ---
    tags:
      - Metrics
    consumes:
      - multipart/form-data
    parameters:
      - name: file
        in: formData
        type: file
        required: true
    responses:
      200:
        description: UIQM (with components) and UCIQE (with components)
    """
    image = to_tensor(_read_upload('file'))
    return jsonify({'success': True, 'report': no_reference_report(image).to_dict()})


if __name__ == '__main__':
    settings.configure_logging()
    print("\n" + "="*70)
    print("UNDERWATER IMAGE ENHANCEMENT API")
    print("="*70)
    print("\nStarting web server...")
    print("API docs: http://localhost:5000/docs")
    print("\nPress Ctrl+C to stop the server\n")

    app.run(debug=False, host='0.0.0.0', port=5000)
